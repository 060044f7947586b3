#pragma once

// Checkpoint file: one JSON header line, then the raw payload as little-endian
// IEEE-754 doubles in section order (parameters, adam first moments, adam second
// moments), each section in EncoderModel::parameters() order.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcode/adam.hpp"
#include "tcode/errors.hpp"
#include "tcode/hash.hpp"
#include "tcode/mlp.hpp"

namespace tcode {

inline constexpr const char* checkpoint_format = "tcode-checkpoint";
inline constexpr int checkpoint_version = 1;

struct Checkpoint {
  EncoderModel model;
  AdamState adam;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::string config_hash;
};

namespace detail {

inline void append_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

/// Writes through a temporary file and renames, so an interrupted write never
/// replaces the previous checkpoint.
inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const auto params = c.model.parameters();
  const std::size_t count = c.model.parameter_count();
  const bool has_moments = !c.adam.first_moment.empty();
  std::string payload;
  payload.reserve(count * 8 * (has_moments ? 3 : 1));
  for (const Tensor* p : params)
    for (double v : p->data()) detail::append_le(payload, v);
  if (has_moments) {
    for (const auto* section : {&c.adam.first_moment, &c.adam.second_moment})
      for (const Tensor& t : *section)
        for (double v : t.data()) detail::append_le(payload, v);
  }

  nlohmann::json acts = nlohmann::json::array();
  for (Activation a : c.model.activations()) acts.push_back(to_string(a));
  const nlohmann::json header = {
      {"format", checkpoint_format},
      {"version", checkpoint_version},
      {"layer_widths", c.model.widths()},
      {"activations", acts},
      {"seed", c.seed},
      {"step", c.step},
      {"config_hash", c.config_hash},
      {"parameter_count", count},
      {"sections", has_moments ? nlohmann::json{"parameters", "adam_m", "adam_v"} : nlohmann::json{"parameters"}},
      {"adam_step", c.adam.step},
      {"checksum", sha1_hex(payload)},
  };

  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out << header.dump() << '\n';
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint header is not JSON: " + std::string(e.what()));
  }
  std::ostringstream rest;
  rest << in.rdbuf();
  const std::string payload = rest.str();

  try {
    if (header.at("format") != checkpoint_format) throw IoError("not a checkpoint file: " + path.string());
    if (header.at("version").get<int>() != checkpoint_version) {
      throw IoError("unsupported checkpoint version " + header.at("version").dump());
    }
    if (sha1_hex(payload) != header.at("checksum").get<std::string>()) {
      throw IoError("checkpoint checksum mismatch in " + path.string());
    }
    std::vector<Activation> acts;
    for (const auto& a : header.at("activations")) acts.push_back(parse_activation(a.get<std::string>()));
    Checkpoint c;
    c.model = EncoderModel(header.at("layer_widths").get<std::vector<std::size_t>>(), std::move(acts));
    c.seed = header.at("seed").get<std::uint64_t>();
    c.step = header.at("step").get<std::uint64_t>();
    c.config_hash = header.at("config_hash").get<std::string>();
    c.adam.step = header.at("adam_step").get<std::uint64_t>();
    const std::size_t sections = header.at("sections").size();
    const std::size_t count = c.model.parameter_count();
    if (header.at("parameter_count").get<std::size_t>() != count || payload.size() != sections * count * 8) {
      throw IoError("checkpoint payload size does not match its header");
    }
    const char* p = payload.data();
    for (Tensor* t : c.model.parameters())
      for (double& v : t->data()) v = detail::read_le(p), p += 8;
    if (sections == 3) {
      for (auto* section : {&c.adam.first_moment, &c.adam.second_moment}) {
        for (const Tensor* t : std::as_const(c.model).parameters()) {
          Tensor m(t->shape());
          for (double& v : m.data()) v = detail::read_le(p), p += 8;
          section->push_back(std::move(m));
        }
      }
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw IoError("malformed checkpoint header: " + std::string(e.what()));
  }
}

}  // namespace tcode
