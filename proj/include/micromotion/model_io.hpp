#pragma once

// Versioned little-endian network container.
//
//   "MMN1", u32 version (1), u32 kind (1 = time-domain, 2 = video)
//   u32 layer count, then per layer u32 kernel, in_ch, out_ch, dilation, activation
//   kind 2 only: u32 height, u32 width, f64 dropout_p
//   u64 parameter count, then that many f32 values in storage order

#include <string>

#include "micromotion/net3d.hpp"
#include "micromotion/tensor_io.hpp"

namespace micromotion {

inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

enum class ModelKind : std::uint32_t { network1d = 1, network3d = 2 };

inline void put_layers(std::string& buf, const std::vector<ConvShape>& layers) {
  put_u32(buf, static_cast<std::uint32_t>(layers.size()));
  for (const auto& l : layers) {
    put_u32(buf, static_cast<std::uint32_t>(l.kernel));
    put_u32(buf, static_cast<std::uint32_t>(l.in_ch));
    put_u32(buf, static_cast<std::uint32_t>(l.out_ch));
    put_u32(buf, static_cast<std::uint32_t>(l.dilation));
    put_u32(buf, static_cast<std::uint32_t>(l.act));
  }
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() { return get_u32(take(4)); }
  std::uint64_t u64() { return get_u64(take(8)); }
  float f32() { return get_f32(take(4)); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const unsigned char* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw TruncatedError("model file truncated");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
    pos_ += n;
    return p;
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline ModelKind read_header(ByteReader& r, std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "MMN1") throw BadMagicError("not an MMN1 model file");
  r.u32();
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) throw FormatError("unsupported model version " + std::to_string(version));
  return static_cast<ModelKind>(r.u32());
}

inline std::vector<ConvShape> get_layers(ByteReader& r) {
  const std::uint32_t count = r.u32();
  if (count == 0 || count > 4096) throw FormatError("implausible layer count");
  std::vector<ConvShape> layers(count);
  for (auto& l : layers) {
    l.kernel = r.u32();
    l.in_ch = r.u32();
    l.out_ch = r.u32();
    l.dilation = r.u32();
    const std::uint32_t a = r.u32();
    if (a > 1) throw FormatError("unknown activation code " + std::to_string(a));
    l.act = static_cast<Activation>(a);
  }
  return layers;
}

inline std::vector<float> get_params(ByteReader& r, std::size_t expected) {
  const std::uint64_t count = r.u64();
  if (count != expected) throw FormatError("parameter count does not match the layer descriptors");
  std::vector<float> p(count);
  for (float& v : p) {
    v = r.f32();
    if (!std::isfinite(v)) throw NonFiniteError("model parameter is not finite");
  }
  if (!r.done()) throw FormatError("trailing bytes after model parameters");
  return p;
}

}  // namespace detail

inline std::string encode_network(const Network1D<float>& net) {
  net.validate();
  std::string buf = "MMN1";
  detail::put_u32(buf, kModelVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(detail::ModelKind::network1d));
  detail::put_layers(buf, net.layers);
  detail::put_u64(buf, net.params.size());
  for (const float v : net.params) detail::put_f32(buf, v);
  return buf;
}

inline std::string encode_network(const Network3D<float>& net) {
  net.validate();
  std::string buf = "MMN1";
  detail::put_u32(buf, kModelVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(detail::ModelKind::network3d));
  detail::put_layers(buf, net.stage);
  detail::put_u32(buf, static_cast<std::uint32_t>(net.height));
  detail::put_u32(buf, static_cast<std::uint32_t>(net.width));
  detail::put_u64(buf, std::bit_cast<std::uint64_t>(net.dropout_p));
  detail::put_u64(buf, net.params.size());
  for (const float v : net.params) detail::put_f32(buf, v);
  return buf;
}

inline Network1D<float> decode_network1d(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (detail::read_header(r, bytes) != detail::ModelKind::network1d)
    throw FormatError("model file does not hold a time-domain network");
  Network1D<float> net;
  net.layers = detail::get_layers(r);
  net.params = detail::get_params(r, total_params(net.layers));
  net.validate();
  return net;
}

inline Network3D<float> decode_network3d(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (detail::read_header(r, bytes) != detail::ModelKind::network3d)
    throw FormatError("model file does not hold a video network");
  Network3D<float> net;
  net.stage = detail::get_layers(r);
  net.height = r.u32();
  net.width = r.u32();
  net.dropout_p = std::bit_cast<double>(r.u64());
  net.params = detail::get_params(r, total_params(net.stage) + net.height * net.width * net.stage.back().out_ch + 1);
  net.validate();
  return net;
}

inline void write_network(const Network1D<float>& net, const std::string& path) {
  detail::write_file(path, encode_network(net));
}
inline void write_network(const Network3D<float>& net, const std::string& path) {
  detail::write_file(path, encode_network(net));
}
inline Network1D<float> read_network1d(const std::string& path) {
  return decode_network1d(detail::read_file(path));
}
inline Network3D<float> read_network3d(const std::string& path) {
  return decode_network3d(detail::read_file(path));
}

}  // namespace micromotion
