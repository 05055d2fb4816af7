#ifndef BIFRL_SCHEDULE_HPP
#define BIFRL_SCHEDULE_HPP

// Clipped-linear epoch schedule: value x at epoch <= a, y at epoch >= b,
// linear in between. Parsed from the compact "x->y|a->b" form (a bare
// number is a constant schedule).

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bifrl {

struct ScheduleSpec {
  double x = 0.0;
  double y = 0.0;
  int a = 1;
  int b = 1;

  static ScheduleSpec constant(double v) { return {v, v, 1, 1}; }

  static ScheduleSpec make(double x, double y, int a, int b) {
    if (a >= b && !(x == y))
      throw std::invalid_argument("schedule needs a < b");
    return {x, y, a, b};
  }

  double eval(int epoch) const {
    if (epoch < 1) throw std::invalid_argument("epoch must be >= 1");
    if (x == y || a == b) return x;
    const double t =
        static_cast<double>(epoch - a) / static_cast<double>(b - a);
    const double v = x + t * (y - x);
    return std::clamp(v, std::min(x, y), std::max(x, y));
  }

  // rollout lengths floor to integers
  int eval_int(int epoch) const {
    return static_cast<int>(std::floor(eval(epoch)));
  }

  std::string str() const;
  static ScheduleSpec parse(const std::string& s);
};

}  // namespace bifrl

#endif
