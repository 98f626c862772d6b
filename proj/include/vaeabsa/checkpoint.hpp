#pragma once

// Model checkpoint container.
//
//   "VABS" | u32 version=1 | u32 header byte length | header (UTF-8 JSON)
//   parameter tensors, f64 LE, column-major, in header "tensors" order
//   if header.has_optimizer: u64 Adam step | first-moment tensors | second-moment tensors
//
// The JSON header carries V, K, A, S, B, H, L, the MLP widths, activation,
// topic labels, tensor names/shapes, epochs_completed and the generator
// state needed to resume training exactly.

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vaeabsa/binary_io.hpp"
#include "vaeabsa/error.hpp"
#include "vaeabsa/model.hpp"
#include "vaeabsa/training.hpp"

namespace vaeabsa {

inline constexpr char kCheckpointMagic[4] = {'V', 'A', 'B', 'S'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelShape shape;
  ModelParams params;
  std::optional<AdamState> adam;
  std::size_t epochs_completed = 0;
  std::string rng_state;
};

namespace detail {

inline void write_tensors(std::ostream& out, const ModelParams& p) {
  visit_tensors(p, [&](std::string_view, std::span<const double> d, Eigen::Index, Eigen::Index) {
    for (double v : d) io::put_f64(out, v);
  });
}

inline void read_tensors(io::Reader& rd, ModelParams& p, const char* what) {
  visit_tensors(p, [&](std::string_view name, std::span<double> d, Eigen::Index, Eigen::Index) {
    rd.set_context(std::string(what) + " tensor '" + std::string(name) + "'");
    for (double& v : d) v = rd.f64();
  });
}

}  // namespace detail

inline void write_checkpoint(const Checkpoint& ck, const std::string& path) {
  check_shape(ck.params, ck.shape);
  const auto& s = ck.shape;
  nlohmann::ordered_json h;
  h["V"] = s.vocab_size;
  h["K"] = s.K();
  h["A"] = s.layout.A();
  h["S"] = s.layout.S();
  h["B"] = s.layout.B();
  h["H"] = s.hidden_dim;
  h["L"] = s.num_layers;
  h["enc_hidden"] = s.enc_hidden;
  h["senti_hidden"] = s.senti_hidden;
  h["activation"] = to_string(s.activation);
  h["aspect_labels"] = s.layout.aspect_labels;
  h["sentiment_labels"] = s.layout.sentiment_labels;
  h["tensors"] = nlohmann::ordered_json::array();
  visit_tensors(ck.params, [&](std::string_view name, std::span<const double>, Eigen::Index r, Eigen::Index c) {
    h["tensors"].push_back({{"name", std::string(name)}, {"rows", r}, {"cols", c}});
  });
  h["epochs_completed"] = ck.epochs_completed;
  h["rng_state"] = ck.rng_state;
  h["has_optimizer"] = ck.adam.has_value();
  const std::string header = h.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out.write(kCheckpointMagic, 4);
  io::put_u32(out, kCheckpointVersion);
  io::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  detail::write_tensors(out, ck.params);
  if (ck.adam) {
    io::put_u64(out, ck.adam->step);
    detail::write_tensors(out, ck.adam->m);
    detail::write_tensors(out, ck.adam->v);
  }
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint '" + path + "'");
  io::Reader rd(in);
  rd.set_context("checkpoint header");
  char magic[4];
  rd.bytes(magic, 4);
  if (std::string(magic, 4) != std::string(kCheckpointMagic, 4)) {
    throw FormatError("'" + path + "' is not a model checkpoint (bad magic)");
  }
  const auto version = rd.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = rd.u32();
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(rd.str(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  Checkpoint ck;
  try {
    auto& s = ck.shape;
    s.vocab_size = h.at("V").get<std::size_t>();
    s.layout.aspect_labels = h.at("aspect_labels").get<std::vector<std::string>>();
    s.layout.sentiment_labels = h.at("sentiment_labels").get<std::vector<std::string>>();
    s.layout.background_count = h.at("B").get<std::size_t>();
    s.hidden_dim = h.at("H").get<std::size_t>();
    s.num_layers = h.at("L").get<std::size_t>();
    s.enc_hidden = h.at("enc_hidden").get<std::size_t>();
    s.senti_hidden = h.at("senti_hidden").get<std::size_t>();
    s.activation = parse_activation(h.at("activation").get<std::string>());
    if (h.at("K").get<std::size_t>() != s.K()) throw FormatError("checkpoint K disagrees with its labels");
    ck.epochs_completed = h.value("epochs_completed", std::size_t{0});
    ck.rng_state = h.value("rng_state", std::string());
    ck.params = ModelParams::zeros(s);
    std::size_t t = 0;
    const auto& tensors = h.at("tensors");
    bool shapes_ok = tensors.size() == 13;
    visit_tensors(ck.params, [&](std::string_view name, std::span<double>, Eigen::Index r, Eigen::Index c) {
      if (!shapes_ok || t >= tensors.size()) return;
      const auto& e = tensors[t++];
      shapes_ok = e.at("name").get<std::string>() == name && e.at("rows").get<Eigen::Index>() == r &&
                  e.at("cols").get<Eigen::Index>() == c;
    });
    if (!shapes_ok) throw FormatError("checkpoint tensor table does not match its layout");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint header is incomplete: " + std::string(e.what()));
  } catch (const ValidationError& e) {
    throw FormatError("checkpoint header is invalid: " + std::string(e.what()));
  }
  detail::read_tensors(rd, ck.params, "parameter");
  if (h.value("has_optimizer", false)) {
    AdamState st = AdamState::zeros(ck.shape);
    rd.set_context("optimizer state");
    st.step = rd.u64();
    detail::read_tensors(rd, st.m, "first-moment");
    detail::read_tensors(rd, st.v, "second-moment");
    ck.adam = std::move(st);
  }
  if (!rd.at_eof()) throw FormatError("trailing bytes in checkpoint '" + path + "'");
  return ck;
}

}  // namespace vaeabsa
