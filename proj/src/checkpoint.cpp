#include "bifrl/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace bifrl {

namespace {
constexpr char kMagic[8] = {'B', 'F', 'R', 'L', 'C', 'K', 'P', 'T'};

const uint32_t* crc_table() {
  static uint32_t table[256];
  static bool init = [] {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    return true;
  }();
  (void)init;
  return table;
}
}  // namespace

uint32_t crc32(const void* data, size_t n, uint32_t seed) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  uint32_t c = seed ^ 0xFFFFFFFFu;
  const uint32_t* t = crc_table();
  for (size_t i = 0; i < n; ++i) c = t[(c ^ p[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void ByteWriter::put_u32(uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  buf_.append(b, 4);
}

void ByteWriter::put_u64(uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  buf_.append(b, 8);
}

void ByteWriter::put_double(double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(bits);
}

void ByteWriter::put_string(const std::string& s) {
  put_u64(s.size());
  buf_.append(s);
}

void ByteWriter::put_doubles(const std::vector<double>& v) {
  put_u64(v.size());
  for (double x : v) put_double(x);
}

uint32_t ByteReader::get_u32() {
  need(4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<uint32_t>(static_cast<uint8_t>(buf_[pos_ + i])) << (8 * i);
  pos_ += 4;
  return v;
}

uint64_t ByteReader::get_u64() {
  need(8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<uint64_t>(static_cast<uint8_t>(buf_[pos_ + i])) << (8 * i);
  pos_ += 8;
  return v;
}

double ByteReader::get_double() {
  const uint64_t bits = get_u64();
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string ByteReader::get_string() {
  const uint64_t n = get_u64();
  need(n);
  std::string s = buf_.substr(pos_, n);
  pos_ += n;
  return s;
}

std::vector<double> ByteReader::get_doubles() {
  const uint64_t n = get_u64();
  std::vector<double> v(n);
  for (auto& x : v) x = get_double();
  return v;
}

void write_checkpoint_file(const std::string& path,
                           const std::string& payload) {
  ByteWriter head;
  head.put_u32(kCheckpointVersion);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("checkpoint: cannot write " + tmp);
    f.write(kMagic, sizeof(kMagic));
    f.write(head.bytes().data(),
            static_cast<std::streamsize>(head.bytes().size()));
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    const uint32_t crc = crc32(payload.data(), payload.size());
    ByteWriter tail;
    tail.put_u32(crc);
    f.write(tail.bytes().data(),
            static_cast<std::streamsize>(tail.bytes().size()));
    if (!f) throw CheckpointError("checkpoint: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw CheckpointError("checkpoint: rename failed for " + path);
}

std::string read_checkpoint_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open " + path);
  std::string all((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  if (all.size() < sizeof(kMagic) + 8)
    throw CheckpointError("checkpoint: file too short");
  if (std::memcmp(all.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("checkpoint: bad magic");
  ByteReader head(all.substr(sizeof(kMagic), 4));
  const uint32_t version = head.get_u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: version mismatch (file " +
                          std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const size_t payload_off = sizeof(kMagic) + 4;
  const size_t payload_len = all.size() - payload_off - 4;
  const std::string payload = all.substr(payload_off, payload_len);
  ByteReader tail(all.substr(payload_off + payload_len, 4));
  const uint32_t want = tail.get_u32();
  const uint32_t got = crc32(payload.data(), payload.size());
  if (want != got)
    throw CheckpointError("checkpoint: checksum mismatch, file is corrupt");
  return payload;
}

}  // namespace bifrl
