#include "streamdf/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace streamdf {

namespace {

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i32(std::string& out, int32_t v) { put_u32(out, static_cast<uint32_t>(v)); }

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out += s;
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  const std::string& path;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("truncated checkpoint: " + path);
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + static_cast<size_t>(i)]))
           << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + static_cast<size_t>(i)]))
           << (8 * i);
    pos += 8;
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

uint64_t fnv1a(const std::string& data) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

void save_checkpoint(const std::string& path, const EncoderConfig& config,
                     const Parameters& params, const std::vector<std::string>& vocab_words) {
  std::string body;
  put_i32(body, config.vocab_size);
  put_i32(body, config.max_len);
  put_i32(body, config.d_model);
  put_i32(body, config.n_layers);
  put_i32(body, config.n_heads);
  put_i32(body, config.d_ff);
  put_f64(body, config.dropout_rate);
  put_u64(body, config.seed);
  body.push_back(config.use_start_marker ? 1 : 0);

  put_u32(body, static_cast<uint32_t>(vocab_words.size()));
  for (const std::string& w : vocab_words) put_string(body, w);

  auto tensors = params.named_tensors();
  put_u32(body, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put_string(body, name);
    put_i32(body, m->rows);
    put_i32(body, m->cols);
    for (double v : m->data) put_f64(body, v);
  }

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  out += body;
  put_u64(out, fnv1a(body));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (buf.size() < sizeof(kCheckpointMagic) + 8 ||
      std::memcmp(buf.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);

  std::string body = buf.substr(sizeof(kCheckpointMagic), buf.size() - sizeof(kCheckpointMagic) - 8);
  Reader tail{buf, buf.size() - 8, path};
  if (fnv1a(body) != tail.u64())
    throw std::runtime_error("checkpoint checksum mismatch: " + path);

  Reader r{body, 0, path};
  Checkpoint ckpt;
  ckpt.config.vocab_size = r.i32();
  ckpt.config.max_len = r.i32();
  ckpt.config.d_model = r.i32();
  ckpt.config.n_layers = r.i32();
  ckpt.config.n_heads = r.i32();
  ckpt.config.d_ff = r.i32();
  ckpt.config.dropout_rate = r.f64();
  ckpt.config.seed = r.u64();
  r.need(1);
  ckpt.config.use_start_marker = body[r.pos++] != 0;
  ckpt.config.validate();

  uint32_t n_words = r.u32();
  ckpt.vocab_words.reserve(n_words);
  for (uint32_t i = 0; i < n_words; ++i) ckpt.vocab_words.push_back(r.str());

  ckpt.params = Parameters::zeros(ckpt.config);
  auto tensors = ckpt.params.named_tensors();
  uint32_t n_tensors = r.u32();
  if (n_tensors != tensors.size())
    throw std::runtime_error("checkpoint tensor count mismatch: " + path);
  for (auto& [name, m] : tensors) {
    std::string stored = r.str();
    if (stored != name)
      throw std::runtime_error("checkpoint tensor order mismatch, expected '" + name + "' got '" +
                               stored + "': " + path);
    int rows = r.i32(), cols = r.i32();
    if (rows != m->rows || cols != m->cols)
      throw std::runtime_error("checkpoint tensor shape mismatch for '" + name + "': " + path);
    for (double& v : m->data) v = r.f64();
  }
  if (r.pos != body.size()) throw std::runtime_error("trailing bytes in checkpoint: " + path);
  return ckpt;
}

}  // namespace streamdf
