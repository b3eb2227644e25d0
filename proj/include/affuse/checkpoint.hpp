#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "affuse/byte_io.hpp"
#include "affuse/fusion.hpp"

namespace affuse {

// Model checkpoint, little-endian:
//
//   "AFFM", u32 version (1), u32 layer_count
//   per layer: u32 in, u32 out, u8 activation (0 identity, 1 relu),
//              out*in float32 weights (row-major), out float32 bias
//   u8 combo mask (bit i = modality i in canonical order), u8 target (0 valence, 1 arousal)
//   u32 echo length, UTF-8 config echo
//
// Layers appear in FusionModel::layer order. Parameters are stored as float32, so a
// FusionModel<float> round-trips bit-exactly.

inline constexpr std::string_view kCheckpointMagic = "AFFM";
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  FusionModel<T> model;
  std::string config_echo;
};

template <typename T>
std::string encode_checkpoint(const FusionModel<T>& model, std::string_view config_echo = {}) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model.num_layers()));
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    const auto& layer = model.layer(i);
    w.u32(static_cast<std::uint32_t>(layer.in()));
    w.u32(static_cast<std::uint32_t>(layer.out()));
    w.u8(static_cast<std::uint8_t>(layer.activation));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.f32(static_cast<float>(layer.weights(r, c)));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) w.f32(static_cast<float>(layer.bias(r)));
  }
  w.u8(model.combo.mask());
  w.u8(static_cast<std::uint8_t>(model.target));
  w.u32(static_cast<std::uint32_t>(config_echo.size()));
  w.bytes(config_echo);
  return w.take();
}

template <typename T>
Checkpoint<T> decode_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(4, "magic") != kCheckpointMagic) throw FormatError("bad magic, expected \"AFFM\"", 0);
  const std::size_t version_at = r.offset();
  if (const auto v = r.u32("version"); v != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(v), version_at);
  }
  const std::size_t count_at = r.offset();
  const std::uint32_t count = r.u32("layer count");
  if (count < 3) throw FormatError("checkpoint needs at least 3 layers", count_at);

  std::vector<DenseLayer<T>> layers(count);
  for (auto& layer : layers) {
    const std::uint32_t in = r.u32("layer in");
    const std::uint32_t out = r.u32("layer out");
    const std::size_t act_at = r.offset();
    const std::uint8_t act = r.u8("activation");
    if (in == 0 || out == 0) throw FormatError("layer dimensions must be positive", act_at - 8);
    if (act > 1) throw FormatError("unknown activation code " + std::to_string(act), act_at);
    if (std::uint64_t{in} * out * 4 > r.remaining()) throw FormatError("truncated layer weights", bytes.size());
    layer.activation = static_cast<Activation>(act);
    layer.weights.resize(out, in);
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) layer.weights(i, j) = static_cast<T>(r.f32("weights"));
    }
    layer.bias.resize(out);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = static_cast<T>(r.f32("bias"));
  }
  const std::size_t mask_at = r.offset();
  const std::uint8_t mask = r.u8("combo mask");
  if (mask == 0 || mask >= (1u << kNumModalities)) throw FormatError("invalid combo mask", mask_at);
  const std::size_t target_at = r.offset();
  const std::uint8_t target = r.u8("target");
  if (target > 1) throw FormatError("invalid target dimension code", target_at);
  const std::uint32_t echo_len = r.u32("echo length");
  Checkpoint<T> ck;
  ck.config_echo = std::string(r.bytes(echo_len, "config echo"));
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.offset());

  ck.model.combo = ModalityCombo::from_mask(mask);
  ck.model.target = static_cast<TargetDimension>(target);
  if (ck.model.combo.size() + 2 != count) {
    throw FormatError("layer count does not match modality combination", count_at);
  }
  for (std::size_t i = 0; i + 2 < count; ++i) ck.model.projections.push_back(std::move(layers[i]));
  ck.model.fusion1 = std::move(layers[count - 2]);
  ck.model.fusion2 = std::move(layers[count - 1]);
  std::size_t concat = 0;
  for (const auto& p : ck.model.projections) concat += p.out();
  if (ck.model.fusion1.in() != concat || ck.model.fusion2.in() != ck.model.fusion1.out()) {
    throw FormatError("layer shapes do not chain", count_at);
  }
  return ck;
}

template <typename T>
void save_checkpoint(const FusionModel<T>& model, const std::filesystem::path& path, std::string_view config_echo = {}) {
  detail::write_file_bytes(path, encode_checkpoint(model, config_echo));
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(detail::read_file_bytes(path));
}

}  // namespace affuse
