#include "bifrl/orchestrator.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bifrl/checkpoint.hpp"

namespace bifrl {

namespace {

const double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void serialize_adam(ByteWriter& w, const Adam& a) {
  w.put_doubles(a.m);
  w.put_doubles(a.v);
  w.put_i64(a.t);
  w.put_i64(a.rejected);
}

void deserialize_adam(ByteReader& r, Adam& a) {
  a.m = r.get_doubles();
  a.v = r.get_doubles();
  a.t = r.get_i64();
  a.rejected = r.get_i64();
}

void serialize_net(ByteWriter& w, const Mlp& net) { w.put_doubles(net.params); }

void deserialize_net(ByteReader& r, Mlp& net) {
  auto p = r.get_doubles();
  if (p.size() != net.params.size())
    throw CheckpointError("checkpoint: parameter count mismatch");
  net.params = std::move(p);
}

void serialize_normalizer(ByteWriter& w, const Normalizer& n) {
  w.put_doubles(n.mean);
  w.put_doubles(n.inv_std);
}

void deserialize_normalizer(ByteReader& r, Normalizer& n) {
  n.mean = r.get_doubles();
  n.inv_std = r.get_doubles();
}

void serialize_transitions(ByteWriter& w, const std::vector<Transition>& ts) {
  w.put_u64(ts.size());
  for (const auto& t : ts) {
    w.put_doubles(t.state);
    w.put_doubles(t.action);
    w.put_double(t.reward);
    w.put_doubles(t.next_state);
    w.put_u32(t.done ? 1 : 0);
  }
}

std::vector<Transition> deserialize_transitions(ByteReader& r) {
  const uint64_t n = r.get_u64();
  std::vector<Transition> ts(n);
  for (auto& t : ts) {
    t.state = r.get_doubles();
    t.action = r.get_doubles();
    t.reward = r.get_double();
    t.next_state = r.get_doubles();
    t.done = r.get_u32() != 0;
  }
  return ts;
}

}  // namespace

std::pair<double, double> evaluate_policy(const SacAgent& agent, Env& env,
                                          int episodes, Rng& rng) {
  std::vector<double> returns;
  returns.reserve(episodes);
  for (int e = 0; e < episodes; ++e) {
    auto s = env.reset(rng);
    double total = 0.0;
    while (true) {
      const auto a = agent.act(s, true, rng);
      StepResult r = env.step(s, a, rng);
      total += r.tr.reward;
      if (r.episode_over()) break;
      s = r.tr.next_state;
    }
    returns.push_back(total);
  }
  double mean = 0.0;
  for (double v : returns) mean += v;
  mean /= episodes;
  double var = 0.0;
  for (double v : returns) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / episodes)};
}

std::string checkpoint_config(const std::string& path) {
  ByteReader r(read_checkpoint_file(path));
  return r.get_string();
}

const char* MetricsRow::header() {
  return "epoch,env_steps,eval_return_mean,eval_return_std,"
         "fwd_model_val_nll,bwd_model_val_nll,backward_policy_val_nll,"
         "gan_disc_loss,gan_gen_loss,imitation_loss,actor_loss,q1_loss,"
         "q2_loss,v_loss,alpha,div_fwd_mse,div_bwd_mse,div_policy_mse";
}

std::string MetricsRow::csv() const {
  std::string s;
  s += std::to_string(epoch);
  s += ',';
  s += std::to_string(env_steps);
  for (double v :
       {eval_return_mean, eval_return_std, fwd_model_val_nll,
        bwd_model_val_nll, backward_policy_val_nll, gan_disc_loss,
        gan_gen_loss, imitation_loss, actor_loss, q1_loss, q2_loss, v_loss,
        alpha, div_fwd_mse, div_bwd_mse, div_policy_mse}) {
    s += ',';
    s += fmt(v);
  }
  return s;
}

TrainLoop::TrainLoop(RunConfig cfg, std::string out_dir)
    : cfg_(std::move(cfg)), out_dir_(std::move(out_dir)) {
  cfg_.validate();
  env_ = make_env(cfg_.env);
  eval_env_ = make_env(cfg_.env);

  Rng master = Rng::seeded(cfg_.seed);
  rng_env_ = master.derive(1);
  rng_model_ = master.derive(2);
  rng_rollout_ = master.derive(3);
  rng_agent_ = master.derive(4);
  rng_vgan_ = master.derive(5);
  rng_eval_ = master.derive(6);
  rng_priority_ = master.derive(7);
  Rng rng_init = master.derive(8);

  const EnvSpec& spec = env_->spec();
  SacConfig sac;
  sac.lr_policy = cfg_.sac_lr;
  sac.lr_critic = cfg_.sac_lr;
  sac.gamma = cfg_.gamma;
  sac.tau = cfg_.tau;
  sac.hidden = {cfg_.agent_hidden, cfg_.agent_hidden};
  if (cfg_.fixed_alpha >= 0.0) {
    sac.fixed_alpha = true;
    sac.alpha_value = cfg_.fixed_alpha;
  }
  agent_ = std::make_unique<SacAgent>(spec, sac, rng_init);

  const std::vector<int> model_hidden = {cfg_.model_hidden, cfg_.model_hidden};
  fwd_ens_ = std::make_unique<Ensemble>(
      Ensemble::Direction::Forward, spec.state_dim, spec.action_dim,
      model_hidden, cfg_.ensemble_size, cfg_.model_lr, rng_init);
  bwd_ens_ = std::make_unique<Ensemble>(
      Ensemble::Direction::Backward, spec.state_dim, spec.action_dim,
      model_hidden, cfg_.ensemble_size, cfg_.model_lr, rng_init);
  bp_ = std::make_unique<BackwardPolicy>(
      spec.state_dim, spec.action_dim, model_hidden, cfg_.model_lr,
      spec.action_low, spec.action_high, rng_init);

  VganConfig vg;
  vg.z_dim = cfg_.vgan_z_dim;
  vg.lambda = cfg_.vgan_lambda;
  vg.steps_per_epoch = cfg_.vgan_steps_per_epoch;
  vg.batch_size = cfg_.vgan_batch_size;
  vg.reward_reparam = cfg_.vgan_reward_reparam;
  vgan_ = std::make_unique<Vgan>(spec.state_dim, vg, rng_init);

  d_env_.set_capacity(cfg_.env_buffer_capacity);
  d_b_.set_capacity(1000000);
  d_f_.set_capacity(1000000);

  metrics_text_ = std::string(MetricsRow::header()) + "\n";

  if (!out_dir_.empty()) {
    std::filesystem::create_directories(out_dir_);
    std::ofstream cfg_out(out_dir_ + "/config.used");
    cfg_out << cfg_.to_text();
  }
}

void TrainLoop::stage(const std::string& name) {
  trace_.push_back("epoch " + std::to_string(epoch_) + ": " + name);
}

double TrainLoop::alpha_schedule(int epoch) const {
  const ScheduleSpec sched{0.2, 0.95, 1, cfg_.vgan_e_alpha};
  return sched.eval(epoch);
}

void TrainLoop::collect_steps(int n, bool random_actions) {
  const EnvSpec& spec = env_->spec();
  for (int i = 0; i < n; ++i) {
    if (need_reset_) {
      cur_state_ = env_->reset(rng_env_);
      env_->restore_step_count(0);
      episode_steps_ = 0;
      need_reset_ = false;
    }
    std::vector<double> a(spec.action_dim);
    if (random_actions) {
      for (int j = 0; j < spec.action_dim; ++j)
        a[j] = rng_env_.uniform(spec.action_low[j], spec.action_high[j]);
    } else {
      a = agent_->act(cur_state_, false, rng_env_);
    }
    StepResult r = env_->step(cur_state_, a, rng_env_);
    ++env_steps_;
    ++episode_steps_;
    if (d_env_.total_added() % cfg_.holdout_every == cfg_.holdout_every - 1)
      holdout_.push_back(r.tr);
    else
      d_env_.add(r.tr);
    if (r.episode_over())
      need_reset_ = true;
    else
      cur_state_ = r.tr.next_state;
  }
}

void TrainLoop::train_models() {
  const EnvSpec& spec = env_->spec();
  const int sd = spec.state_dim, ad = spec.action_dim;
  const int n = static_cast<int>(d_env_.size());
  ModelTrainOpts opts;
  opts.batch_size = cfg_.model_batch_size;
  opts.lr = cfg_.model_lr;
  opts.max_batches = cfg_.model_max_batches;

  std::vector<double> X(static_cast<size_t>(n) * (sd + ad));
  std::vector<double> Y(static_cast<size_t>(n) * (sd + 1));

  const bool fwd_needed =
      cfg_.forward_rollouts || cfg_.gan_mode != GanMode::Off;
  if (fwd_needed) {
    stage("train_forward");
    for (int i = 0; i < n; ++i) {
      const Transition& t = d_env_.at(i);
      std::memcpy(X.data() + static_cast<size_t>(i) * (sd + ad),
                  t.state.data(), sizeof(double) * sd);
      std::memcpy(X.data() + static_cast<size_t>(i) * (sd + ad) + sd,
                  t.action.data(), sizeof(double) * ad);
      for (int j = 0; j < sd; ++j)
        Y[static_cast<size_t>(i) * (sd + 1) + j] =
            t.next_state[j] - t.state[j];
      Y[static_cast<size_t>(i) * (sd + 1) + sd] = t.reward;
    }
    Rng train_rng = rng_model_.derive(epoch_ * 16 + 1);
    auto rep = fwd_ens_->train(X.data(), Y.data(), n, opts, train_rng);
    row_.fwd_model_val_nll = rep.trained ? rep.val_loss : kNan;
    if (!rep.trained)
      run_log_ += "epoch " + std::to_string(epoch_) +
                  ": forward model skipped, too few samples\n";
  }

  if (cfg_.backward_mode != BackwardMode::Off) {
    stage("train_backward");
    for (int i = 0; i < n; ++i) {
      const Transition& t = d_env_.at(i);
      std::memcpy(X.data() + static_cast<size_t>(i) * (sd + ad),
                  t.next_state.data(), sizeof(double) * sd);
      std::memcpy(X.data() + static_cast<size_t>(i) * (sd + ad) + sd,
                  t.action.data(), sizeof(double) * ad);
      for (int j = 0; j < sd; ++j)
        Y[static_cast<size_t>(i) * (sd + 1) + j] =
            t.state[j] - t.next_state[j];
      Y[static_cast<size_t>(i) * (sd + 1) + sd] = t.reward;
    }
    Rng train_rng = rng_model_.derive(epoch_ * 16 + 2);
    auto rep = bwd_ens_->train(X.data(), Y.data(), n, opts, train_rng);
    row_.bwd_model_val_nll = rep.trained ? rep.val_loss : kNan;

    stage("train_backward_policy");
    std::vector<double> Xs(static_cast<size_t>(n) * sd);
    std::vector<double> Ya(static_cast<size_t>(n) * ad);
    for (int i = 0; i < n; ++i) {
      const Transition& t = d_env_.at(i);
      std::memcpy(Xs.data() + static_cast<size_t>(i) * sd,
                  t.next_state.data(), sizeof(double) * sd);
      std::memcpy(Ya.data() + static_cast<size_t>(i) * ad, t.action.data(),
                  sizeof(double) * ad);
    }
    Rng bp_rng = rng_model_.derive(epoch_ * 16 + 3);
    auto rep2 = bp_->train(Xs.data(), Ya.data(), n, opts, bp_rng);
    row_.backward_policy_val_nll = rep2.trained ? rep2.val_loss : kNan;
  }
}

void TrainLoop::train_vgan() {
  stage("train_vgan");
  const int sd = env_->spec().state_dim;
  const size_t window = std::min(cfg_.state_window, d_env_.size());
  if (window == 0) return;

  RegContext ctx;
  ctx.agent = agent_.get();
  ctx.forward_ens = fwd_ens_.get();
  ctx.alpha = alpha_schedule(epoch_);
  ctx.reward_reparam = cfg_.vgan_reward_reparam;
  double lambda = cfg_.gan_mode == GanMode::Value ? cfg_.vgan_lambda : 0.0;
  if (lambda != 0.0 && ctx.alpha < 1.0 && !fwd_ens_->trained()) {
    lambda = 0.0;  // regularizer needs the reward model
    run_log_ += "epoch " + std::to_string(epoch_) +
                ": value regularizer off, forward model not trained yet\n";
  }

  double d_loss = 0.0, g_loss = 0.0;
  std::vector<std::vector<double>> real(cfg_.vgan_batch_size,
                                        std::vector<double>(sd));
  const size_t base = d_env_.size() - window;
  for (int step = 0; step < cfg_.vgan_steps_per_epoch; ++step) {
    for (auto& s : real) {
      const size_t idx =
          base + static_cast<size_t>(
                     rng_vgan_.uniform_int(static_cast<int>(window)));
      s = d_env_.at(idx).next_state;
    }
    d_loss += vgan_->discriminator_step(real, rng_vgan_);
    g_loss += vgan_->generator_step(lambda, ctx, rng_vgan_);
  }
  row_.gan_disc_loss = d_loss / cfg_.vgan_steps_per_epoch;
  row_.gan_gen_loss = g_loss / cfg_.vgan_steps_per_epoch;
}

void TrainLoop::build_state_collection() {
  stage("aggregate");
  const int sd = env_->spec().state_dim;
  std::vector<std::vector<double>> gen;
  if (cfg_.gan_mode != GanMode::Off) {
    const size_t take = std::min(cfg_.state_window, d_env_.size());
    const size_t want = static_cast<size_t>(
        std::llround(cfg_.vgan_state_ratio * static_cast<double>(take)));
    gen = vgan_->sample_states(static_cast<int>(want), rng_vgan_);
  }
  collection_ = aggregate_states(d_env_, gen, cfg_.vgan_state_ratio,
                                 cfg_.state_window, sd);
  // with gan off there is nothing to match the ratio against
  if (cfg_.gan_mode == GanMode::Off) {
    const size_t take = std::min(cfg_.state_window, d_env_.size());
    collection_.resize(take);
  }

  const int n = static_cast<int>(collection_.size());
  std::vector<double> S(static_cast<size_t>(n) * sd);
  for (int i = 0; i < n; ++i)
    std::memcpy(S.data() + static_cast<size_t>(i) * sd, collection_[i].data(),
                sizeof(double) * sd);
  collection_values_.resize(n);
  agent_->estimate_values(S.data(), n, collection_values_.data());
}

void TrainLoop::fill_hs_buffers() {
  const int sd = env_->spec().state_dim;
  const int ad = env_->spec().action_dim;
  const int n = static_cast<int>(collection_.size());

  if (cfg_.backward_mode != BackwardMode::Off && bwd_ens_->trained() &&
      bp_->trained()) {
    stage("fill_hs_b");
    const auto idx = select_top_k(collection_values_, cfg_.top_k_percent);
    hs_b_.clear();
    hs_b_.reserve(idx.size());
    for (size_t i : idx) hs_b_.push_back(collection_[i]);
  } else {
    hs_b_.clear();
  }

  if (cfg_.forward_rollouts && fwd_ens_->trained()) {
    stage("fill_hs_f");
    // one-step TD residuals under the current policy and forward model
    std::vector<double> S(static_cast<size_t>(n) * sd);
    for (int i = 0; i < n; ++i)
      std::memcpy(S.data() + static_cast<size_t>(i) * sd,
                  collection_[i].data(), sizeof(double) * sd);
    std::vector<double> A(static_cast<size_t>(n) * ad);
    auto sampler = agent_->policy().sampler(rng_priority_);
    sampler(S.data(), n, A.data(), rng_priority_);
    std::vector<double> X(static_cast<size_t>(n) * (sd + ad));
    for (int i = 0; i < n; ++i) {
      std::memcpy(X.data() + static_cast<size_t>(i) * (sd + ad),
                  S.data() + static_cast<size_t>(i) * sd, sizeof(double) * sd);
      std::memcpy(X.data() + static_cast<size_t>(i) * (sd + ad) + sd,
                  A.data() + static_cast<size_t>(i) * ad, sizeof(double) * ad);
    }
    std::vector<double> delta(static_cast<size_t>(n) * sd), reward(n);
    fwd_ens_->predict(X.data(), n, rng_priority_, delta.data(), reward.data());
    std::vector<double> S2(static_cast<size_t>(n) * sd);
    for (size_t i = 0; i < S2.size(); ++i) S2[i] = S[i] + delta[i];
    std::vector<double> V2(n);
    agent_->estimate_values(S2.data(), n, V2.data());
    std::vector<double> td(n);
    for (int i = 0; i < n; ++i)
      td[i] = std::abs(collection_values_[i] -
                       (reward[i] + cfg_.gamma * V2[i]));

    const auto probs =
        boltzmann_probs(collection_values_, td, cfg_.boltzmann_beta);
    const auto picks = boltzmann_sample(
        probs, static_cast<size_t>(cfg_.m2_forward_rollouts), rng_priority_);
    hs_f_.clear();
    hs_f_.reserve(picks.size());
    for (size_t i : picks) hs_f_.push_back(collection_[i]);
  } else {
    hs_f_.clear();
  }
}

void TrainLoop::do_backward_rollouts() {
  stage("backward_rollouts");
  d_b_.clear();
  if (hs_b_.empty()) return;
  const int k_b = cfg_.k_b.eval_int(epoch_);
  std::vector<std::vector<double>> starts;
  starts.reserve(cfg_.m1_backward_rollouts);
  for (int i = 0; i < cfg_.m1_backward_rollouts; ++i)
    starts.push_back(
        hs_b_[rng_rollout_.uniform_int(static_cast<int>(hs_b_.size()))]);
  auto res = backward_rollouts(starts, k_b, *bp_, *bwd_ens_, *env_,
                               rng_rollout_);
  if (cfg_.backward_mode == BackwardMode::BI) {
    for (auto& d : res.demos) d_b_.add(std::move(d));
  } else {
    for (auto& t : res.transitions) d_f_.add(std::move(t));
  }
  if (res.nonfinite_truncations > 0)
    run_log_ += "epoch " + std::to_string(epoch_) + ": " +
                std::to_string(res.nonfinite_truncations) +
                " backward rollouts truncated on non-finite states\n";
}

void TrainLoop::do_imitation() {
  stage("imitation");
  if (d_b_.empty()) {
    ++imitation_skips_;
    row_.imitation_loss = kNan;
    run_log_ += "epoch " + std::to_string(epoch_) +
                ": imitation skipped, empty demonstration buffer\n";
    return;
  }
  double total = 0.0;
  for (int g = 0; g < cfg_.g1_imitation_updates; ++g) {
    auto batch = d_b_.sample_batch(cfg_.sac_batch_size, rng_agent_);
    total += agent_->imitation_update(batch);
  }
  row_.imitation_loss = total / cfg_.g1_imitation_updates;
}

void TrainLoop::do_forward_rollouts() {
  stage("forward_rollouts");
  if (hs_f_.empty()) return;
  const int k_f = cfg_.k_f.eval_int(epoch_);
  auto sampler = agent_->policy().sampler(rng_rollout_);
  auto res =
      forward_rollouts(hs_f_, k_f, sampler, *fwd_ens_, *env_, rng_rollout_);
  for (auto& t : res.transitions) d_f_.add(std::move(t));
  if (res.nonfinite_truncations > 0)
    run_log_ += "epoch " + std::to_string(epoch_) + ": " +
                std::to_string(res.nonfinite_truncations) +
                " forward rollouts truncated on non-finite states\n";
}

void TrainLoop::do_sac() {
  stage("sac");
  const TransitionBuffer& source = cfg_.forward_rollouts ? d_f_ : d_env_;
  if (source.empty()) {
    ++sac_skips_;
    row_.actor_loss = row_.q1_loss = row_.q2_loss = row_.v_loss = kNan;
    row_.alpha = agent_->alpha();
    run_log_ += "epoch " + std::to_string(epoch_) +
                ": SAC skipped, empty rollout buffer\n";
    return;
  }
  double actor = 0.0, q1 = 0.0, q2 = 0.0, v = 0.0;
  for (int g = 0; g < cfg_.g2_sac_updates; ++g) {
    auto batch = source.sample_batch(cfg_.sac_batch_size, rng_agent_);
    SacLosses l = agent_->sac_update(batch, rng_agent_);
    actor += l.actor;
    q1 += l.q1;
    q2 += l.q2;
    v += l.v;
  }
  row_.actor_loss = actor / cfg_.g2_sac_updates;
  row_.q1_loss = q1 / cfg_.g2_sac_updates;
  row_.q2_loss = q2 / cfg_.g2_sac_updates;
  row_.v_loss = v / cfg_.g2_sac_updates;
  row_.alpha = agent_->alpha();
}

void TrainLoop::do_divergences() {
  stage("divergences");
  const DivergenceReport rep = measure_divergences(
      holdout_, cfg_.backward_mode != BackwardMode::Off ? bp_.get() : nullptr,
      fwd_ens_.get(), bwd_ens_.get());
  if (!rep.valid) {
    run_log_ += "epoch " + std::to_string(epoch_) +
                ": divergence measurement skipped, holdout too small\n";
    return;
  }
  row_.div_fwd_mse =
      fwd_ens_->trained() ? rep.forward_model_mse : kNan;
  row_.div_bwd_mse =
      bwd_ens_->trained() ? rep.backward_model_mse : kNan;
  row_.div_policy_mse =
      (cfg_.backward_mode != BackwardMode::Off && bp_->trained())
          ? rep.policy_divergence_mse
          : kNan;
}

void TrainLoop::do_evaluate() {
  stage("evaluate");
  const auto [mean, sd] =
      evaluate_policy(*agent_, *eval_env_, cfg_.eval_episodes, rng_eval_);
  row_.eval_return_mean = mean;
  row_.eval_return_std = sd;
}

void TrainLoop::append_metrics_row() {
  row_.epoch = epoch_;
  row_.env_steps = env_steps_;
  metrics_.push_back(row_);
  metrics_text_ += row_.csv() + "\n";
  flush_files();
}

void TrainLoop::flush_files() {
  if (out_dir_.empty()) return;
  {
    std::ofstream f(out_dir_ + "/metrics.csv", std::ios::trunc);
    f << metrics_text_;
  }
  {
    std::ofstream f(out_dir_ + "/trace.log", std::ios::trunc);
    for (const auto& s : trace_) f << s << "\n";
  }
  {
    std::ofstream f(out_dir_ + "/run.log", std::ios::trunc);
    f << run_log_;
  }
}

bool TrainLoop::run_epoch() {
  ++epoch_;
  row_ = MetricsRow{};
  row_.fwd_model_val_nll = kNan;
  row_.bwd_model_val_nll = kNan;
  row_.backward_policy_val_nll = kNan;
  row_.gan_disc_loss = kNan;
  row_.gan_gen_loss = kNan;
  row_.imitation_loss = kNan;
  row_.div_fwd_mse = kNan;
  row_.div_bwd_mse = kNan;
  row_.div_policy_mse = kNan;

  try {
    if (epoch_ == 1 && cfg_.init_random_steps > 0) {
      stage("seed_collect");
      collect_steps(cfg_.init_random_steps, true);
    }
    stage("collect");
    collect_steps(cfg_.steps_per_epoch, false);

    d_f_.clear();  // rollout data retention is one epoch

    if (models_needed()) train_models();
    if (cfg_.gan_mode != GanMode::Off) train_vgan();
    if (cfg_.forward_rollouts || cfg_.backward_mode != BackwardMode::Off)
      build_state_collection();
    fill_hs_buffers();
    if (cfg_.backward_mode != BackwardMode::Off && bwd_ens_->trained() &&
        bp_->trained()) {
      do_backward_rollouts();
      if (cfg_.backward_mode == BackwardMode::BI) do_imitation();
    }
    if (cfg_.forward_rollouts && fwd_ens_->trained()) do_forward_rollouts();
    do_sac();
    if (models_needed()) do_divergences();
    do_evaluate();
  } catch (const std::exception& e) {
    if (!out_dir_.empty()) {
      try {
        save_checkpoint(out_dir_ + "/crash.ckpt");
      } catch (...) {
      }
      run_log_ += "epoch " + std::to_string(epoch_) + " aborted: " + e.what() +
                  "\n";
      flush_files();
    }
    throw TrainError("epoch " + std::to_string(epoch_) +
                     " aborted: " + e.what());
  }

  append_metrics_row();

  if (cfg_.checkpoint_every > 0 && epoch_ % cfg_.checkpoint_every == 0 &&
      !out_dir_.empty())
    save_checkpoint(out_dir_ + "/epoch_" + std::to_string(epoch_) + ".ckpt");

  if (!std::isnan(cfg_.stop_at_return) &&
      row_.eval_return_mean >= cfg_.stop_at_return)
    return false;
  return true;
}

int TrainLoop::run() {
  int ran = 0;
  while (epoch_ < cfg_.epochs) {
    ++ran;
    if (!run_epoch()) break;
  }
  if (!out_dir_.empty()) save_checkpoint(out_dir_ + "/final.ckpt");
  return ran;
}

int64_t TrainLoop::steps_to_threshold(double thr) const {
  for (const auto& m : metrics_)
    if (m.eval_return_mean >= thr) return m.env_steps;
  return -1;
}

void TrainLoop::save_checkpoint(const std::string& path) const {
  ByteWriter w;
  w.put_string(cfg_.to_text());
  w.put_i64(epoch_);
  w.put_i64(env_steps_);
  w.put_i64(imitation_skips_);
  w.put_i64(sac_skips_);
  w.put_string(metrics_text_);
  w.put_string(run_log_);

  for (const Rng* r : {&rng_env_, &rng_model_, &rng_rollout_, &rng_agent_,
                       &rng_vgan_, &rng_eval_, &rng_priority_})
    w.put_string(r->save_state());

  w.put_doubles(cur_state_);
  w.put_i64(episode_steps_);
  w.put_u32(need_reset_ ? 1 : 0);

  // buffers, oldest first
  std::vector<Transition> env_items;
  env_items.reserve(d_env_.size());
  for (size_t i = 0; i < d_env_.size(); ++i) env_items.push_back(d_env_.at(i));
  serialize_transitions(w, env_items);
  w.put_i64(d_env_.total_added());
  serialize_transitions(w, holdout_);

  // agent
  SacAgent& ag = const_cast<SacAgent&>(*agent_);
  serialize_net(w, ag.policy().net());
  serialize_net(w, ag.q1());
  serialize_net(w, ag.q2());
  serialize_net(w, ag.v());
  serialize_net(w, ag.v_target());
  serialize_adam(w, ag.policy_opt());
  serialize_adam(w, ag.q1_opt());
  serialize_adam(w, ag.q2_opt());
  serialize_adam(w, ag.v_opt());
  serialize_adam(w, ag.alpha_opt());
  w.put_double(ag.log_alpha());

  // ensembles
  for (const Ensemble* ens : {fwd_ens_.get(), bwd_ens_.get()}) {
    Ensemble& e = const_cast<Ensemble&>(*ens);
    w.put_u32(e.trained() ? 1 : 0);
    serialize_normalizer(w, e.normalizer());
    for (int m = 0; m < e.size(); ++m) {
      serialize_net(w, e.member(m));
      serialize_adam(w, e.optimizers()[m]);
    }
  }
  // backward policy
  {
    BackwardPolicy& b = const_cast<BackwardPolicy&>(*bp_);
    w.put_u32(b.trained() ? 1 : 0);
    serialize_normalizer(w, b.normalizer());
    serialize_net(w, b.net());
    serialize_adam(w, b.optimizer());
  }
  // vgan
  {
    Vgan& v = const_cast<Vgan&>(*vgan_);
    serialize_net(w, v.generator());
    serialize_net(w, v.discriminator());
    serialize_adam(w, v.generator_opt());
    serialize_adam(w, v.discriminator_opt());
  }

  write_checkpoint_file(path, w.bytes());
}

void TrainLoop::load_checkpoint(const std::string& path) {
  ByteReader r(read_checkpoint_file(path));
  const std::string cfg_text = r.get_string();
  if (cfg_text != cfg_.to_text())
    throw CheckpointError(
        "checkpoint: stored configuration differs from the active one");
  epoch_ = static_cast<int>(r.get_i64());
  env_steps_ = r.get_i64();
  imitation_skips_ = r.get_i64();
  sac_skips_ = r.get_i64();
  metrics_text_ = r.get_string();
  run_log_ = r.get_string();

  for (Rng* rs : {&rng_env_, &rng_model_, &rng_rollout_, &rng_agent_,
                  &rng_vgan_, &rng_eval_, &rng_priority_})
    rs->load_state(r.get_string());

  cur_state_ = r.get_doubles();
  episode_steps_ = static_cast<int>(r.get_i64());
  need_reset_ = r.get_u32() != 0;
  env_->restore_step_count(episode_steps_);

  auto env_items = deserialize_transitions(r);
  const int64_t total_added = r.get_i64();
  d_env_.clear();
  for (auto& t : env_items) d_env_.add(std::move(t));
  d_env_.set_total_added(total_added);
  holdout_ = deserialize_transitions(r);

  deserialize_net(r, agent_->policy().net());
  deserialize_net(r, agent_->q1());
  deserialize_net(r, agent_->q2());
  deserialize_net(r, agent_->v());
  deserialize_net(r, agent_->v_target());
  deserialize_adam(r, agent_->policy_opt());
  deserialize_adam(r, agent_->q1_opt());
  deserialize_adam(r, agent_->q2_opt());
  deserialize_adam(r, agent_->v_opt());
  deserialize_adam(r, agent_->alpha_opt());
  agent_->set_log_alpha(r.get_double());

  for (Ensemble* ens : {fwd_ens_.get(), bwd_ens_.get()}) {
    ens->set_trained(r.get_u32() != 0);
    deserialize_normalizer(r, ens->normalizer());
    for (int m = 0; m < ens->size(); ++m) {
      deserialize_net(r, ens->member(m));
      deserialize_adam(r, ens->optimizers()[m]);
    }
  }
  bp_->set_trained(r.get_u32() != 0);
  deserialize_normalizer(r, bp_->normalizer());
  deserialize_net(r, bp_->net());
  deserialize_adam(r, bp_->optimizer());

  deserialize_net(r, vgan_->generator());
  deserialize_net(r, vgan_->discriminator());
  deserialize_adam(r, vgan_->generator_opt());
  deserialize_adam(r, vgan_->discriminator_opt());

  // rebuild the metrics vector from the stored text
  metrics_.clear();
  // rows are re-parsed only for threshold queries; keep env_steps/mean
  std::istringstream ms(metrics_text_);
  std::string line;
  std::getline(ms, line);  // header
  while (std::getline(ms, line)) {
    MetricsRow mr;
    std::sscanf(line.c_str(), "%d,%ld,%lf,%lf", &mr.epoch, &mr.env_steps,
                &mr.eval_return_mean, &mr.eval_return_std);
    metrics_.push_back(mr);
  }
}

}  // namespace bifrl
