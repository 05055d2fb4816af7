#ifndef BIFRL_CHECKPOINT_HPP
#define BIFRL_CHECKPOINT_HPP

// Versioned binary checkpoints with a CRC32 trailer. Files are written
// to a temp path and renamed, so a crash never leaves a partial file
// behind the real name.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bifrl {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr uint32_t kCheckpointVersion = 1;

uint32_t crc32(const void* data, size_t n, uint32_t seed = 0);

class ByteWriter {
 public:
  void put_u32(uint32_t v);
  void put_u64(uint64_t v);
  void put_i64(int64_t v) { put_u64(static_cast<uint64_t>(v)); }
  void put_double(double v);
  void put_string(const std::string& s);
  void put_doubles(const std::vector<double>& v);
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : buf_(std::move(bytes)) {}
  uint32_t get_u32();
  uint64_t get_u64();
  int64_t get_i64() { return static_cast<int64_t>(get_u64()); }
  double get_double();
  std::string get_string();
  std::vector<double> get_doubles();
  bool exhausted() const { return pos_ == buf_.size(); }

 private:
  void need(size_t n) const {
    if (pos_ + n > buf_.size())
      throw CheckpointError("checkpoint: truncated payload");
  }
  std::string buf_;
  size_t pos_ = 0;
};

// Payload framing: magic, version, payload, crc32(payload).
void write_checkpoint_file(const std::string& path, const std::string& payload);
std::string read_checkpoint_file(const std::string& path);

}  // namespace bifrl

#endif
