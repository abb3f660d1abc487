#include "fscert/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace fscert {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

void put_u32(std::string& buf, std::uint32_t v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_u64(std::string& buf, std::uint64_t v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_f32(std::string& buf, float v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_tensor(std::string& buf, const std::vector<double>& t) {
  put_u64(buf, t.size());
  for (double v : t) put_f32(buf, static_cast<float>(v));
}

class Reader {
 public:
  Reader(const std::string& data, std::size_t pos, std::size_t end)
      : data_(data), pos_(pos), end_(end) {}

  std::uint32_t u32() { return read<std::uint32_t>(); }
  std::uint64_t u64() { return read<std::uint64_t>(); }
  float f32() { return read<float>(); }

  std::vector<double> tensor(std::size_t expected) {
    const std::uint64_t n = u64();
    if (n != expected) throw std::runtime_error("checkpoint: tensor size mismatch");
    std::vector<double> out(n);
    for (std::uint64_t i = 0; i < n; ++i) out[i] = static_cast<double>(f32());
    return out;
  }

  bool done() const { return pos_ == end_; }

 private:
  template <class T>
  T read() {
    if (pos_ + sizeof(T) > end_) throw std::runtime_error("checkpoint: truncated section");
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  const std::string& data_;
  std::size_t pos_;
  std::size_t end_;
};

std::string encode_encoder(const Encoder& e) {
  std::string buf;
  put_u32(buf, static_cast<std::uint32_t>(e.kind));
  put_u32(buf, static_cast<std::uint32_t>(e.d_in));
  put_u32(buf, static_cast<std::uint32_t>(e.d_f));
  put_u64(buf, e.seed);
  put_u32(buf, static_cast<std::uint32_t>(e.layer_dims.size()));
  for (int d : e.layer_dims) put_u32(buf, static_cast<std::uint32_t>(d));
  for (std::size_t l = 0; l < e.weights.size(); ++l) {
    put_tensor(buf, e.weights[l]);
    put_tensor(buf, e.biases[l]);
  }
  return buf;
}

Encoder decode_encoder(Reader& r) {
  Encoder e;
  e.kind = static_cast<EncoderKind>(r.u32());
  e.d_in = static_cast<int>(r.u32());
  e.d_f = static_cast<int>(r.u32());
  e.seed = r.u64();
  const std::uint32_t n_dims = r.u32();
  if (n_dims < 2 || n_dims > 64) throw std::runtime_error("checkpoint: bad layer count");
  e.layer_dims.resize(n_dims);
  for (auto& d : e.layer_dims) d = static_cast<int>(r.u32());
  for (std::uint32_t l = 0; l + 1 < n_dims; ++l) {
    const std::size_t rows = e.layer_dims[l + 1], cols = e.layer_dims[l];
    e.weights.push_back(r.tensor(rows * cols));
    e.biases.push_back(r.tensor(rows));
  }
  return e;
}

std::string encode_denoiser(const DenoiserParams& p, double sigma) {
  std::string buf;
  put_u32(buf, static_cast<std::uint32_t>(p.d_in));
  put_u32(buf, static_cast<std::uint32_t>(p.hidden));
  put_u32(buf, static_cast<std::uint32_t>(p.emb_dim));
  put_f32(buf, static_cast<float>(sigma));
  visit_tensors(const_cast<DenoiserTensors<double>&>(p.t),
                [&](auto& t) { put_tensor(buf, t); });
  return buf;
}

DenoiserParams decode_denoiser(Reader& r, double& sigma) {
  const int d_in = static_cast<int>(r.u32());
  const int hidden = static_cast<int>(r.u32());
  const int emb_dim = static_cast<int>(r.u32());
  sigma = static_cast<double>(r.f32());
  DenoiserParams shape = make_denoiser(d_in, 0, hidden, emb_dim);
  visit_tensors(shape.t, [&](auto& t) { t = r.tensor(t.size()); });
  return shape;
}

std::string encode_mapper(const MapperParams& m, double sigma) {
  std::string buf;
  put_u32(buf, static_cast<std::uint32_t>(m.d_f));
  put_u32(buf, static_cast<std::uint32_t>(m.blocks.size()));
  put_u32(buf, static_cast<std::uint32_t>(m.film_hidden));
  put_u32(buf, static_cast<std::uint32_t>(m.mlp_hidden));
  put_u32(buf, static_cast<std::uint32_t>(m.head_hidden));
  put_f32(buf, static_cast<float>(sigma));
  for (const auto& blk : m.blocks)
    visit_tensors(const_cast<MapperBlockTensors<double>&>(blk),
                  [&](auto& t) { put_tensor(buf, t); });
  return buf;
}

MapperParams decode_mapper(Reader& r, double& sigma) {
  const int d_f = static_cast<int>(r.u32());
  const int blocks = static_cast<int>(r.u32());
  const int film_hidden = static_cast<int>(r.u32());
  const int mlp_hidden = static_cast<int>(r.u32());
  const int head_hidden = static_cast<int>(r.u32());
  sigma = static_cast<double>(r.f32());
  MapperParams m = make_mapper(d_f, 0, blocks, film_hidden, mlp_hidden, head_hidden);
  for (auto& blk : m.blocks) visit_tensors(blk, [&](auto& t) { t = r.tensor(t.size()); });
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string body;
  std::uint32_t sections = 1;
  std::string enc = encode_encoder(ckpt.encoder);
  body.append("ENCD");
  put_u64(body, enc.size());
  body += enc;
  if (ckpt.denoiser) {
    std::string p = encode_denoiser(*ckpt.denoiser, ckpt.gsb_sigma);
    body.append("GSBP");
    put_u64(body, p.size());
    body += p;
    ++sections;
  }
  if (ckpt.mapper) {
    std::string m = encode_mapper(*ckpt.mapper, ckpt.gsb_sigma);
    body.append("GSBM");
    put_u64(body, m.size());
    body += m;
    ++sections;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write("FSC1", 4);
  out.write(reinterpret_cast<const char*>(&sections), sizeof sections);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 8 || data.compare(0, 4, "FSC1") != 0)
    throw std::runtime_error("load_checkpoint: not an FSC1 container: " + path);

  std::uint32_t sections;
  std::memcpy(&sections, data.data() + 4, sizeof sections);
  std::size_t pos = 8;
  Checkpoint ckpt;
  bool have_encoder = false;
  for (std::uint32_t s = 0; s < sections; ++s) {
    if (pos + 12 > data.size()) throw std::runtime_error("load_checkpoint: truncated header");
    const std::string tag = data.substr(pos, 4);
    std::uint64_t size;
    std::memcpy(&size, data.data() + pos + 4, sizeof size);
    pos += 12;
    if (pos + size > data.size()) throw std::runtime_error("load_checkpoint: truncated section");
    Reader r(data, pos, pos + size);
    if (tag == "ENCD") {
      ckpt.encoder = decode_encoder(r);
      have_encoder = true;
    } else if (tag == "GSBP") {
      double sigma = 0.0;
      ckpt.denoiser = decode_denoiser(r, sigma);
      ckpt.gsb_sigma = sigma;
    } else if (tag == "GSBM") {
      double sigma = 0.0;
      ckpt.mapper = decode_mapper(r, sigma);
      ckpt.gsb_sigma = sigma;
    }
    // unknown tags are skipped for forward compatibility
    pos += size;
  }
  if (!have_encoder) throw std::runtime_error("load_checkpoint: missing ENCD section");
  return ckpt;
}

}  // namespace fscert
