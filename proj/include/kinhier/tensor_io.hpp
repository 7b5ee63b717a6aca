#pragma once

#include <array>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "kinhier/io_util.hpp"
#include "kinhier/state_space.hpp"

namespace kinhier {

/// CSV layout: one multi-index column per tensor slot, then the value, rows
/// in flat row-major order.
inline std::string tensor_to_csv(const TensorFunction& fn) {
  std::ostringstream out;
  for (int i = 1; i <= fn.order(); ++i) out << "i" << i << ",";
  out << "value\n";
  const int K = fn.space()->flat_count();
  std::array<int, TensorFunction::kOrderCap> d{};
  for (std::int64_t f = 0; f < fn.flat_count(); ++f) {
    decode_multi(f, fn.order(), K, d.data());
    for (int i = 0; i < fn.order(); ++i) out << d[static_cast<size_t>(i)] << ",";
    out << format_full(fn.values()[f]) << "\n";
  }
  return out.str();
}

inline void export_tensor_csv(const TensorFunction& fn,
                              const std::filesystem::path& csv_path) {
  atomic_write(csv_path, tensor_to_csv(fn));
}

inline void export_tensor_descriptor(const TensorFunction& fn,
                                     const std::filesystem::path& json_path) {
  nlohmann::ordered_json desc;
  desc["order"] = fn.order();
  desc["K"] = fn.space()->flat_count();
  desc["kind"] = to_string(fn.kind());
  atomic_write(json_path, desc.dump(2) + "\n");
}

inline TensorFunction import_tensor_csv(SpacePtr space,
                                        const std::filesystem::path& csv_path,
                                        const std::filesystem::path& json_path) {
  const auto desc = nlohmann::json::parse(read_file(json_path));
  for (const char* key : {"order", "K", "kind"})
    if (!desc.contains(key))
      throw config_error("tensor descriptor missing key '" + std::string(key) + "'");
  const int order = desc.at("order").get<int>();
  const int K = desc.at("K").get<int>();
  const std::string kind_str = desc.at("kind").get<std::string>();
  if (K != space->flat_count())
    throw config_error("tensor descriptor K does not match the space");
  Kind kind;
  if (kind_str == "observable")
    kind = Kind::observable;
  else if (kind_str == "state")
    kind = Kind::state;
  else
    throw config_error("tensor descriptor kind must be observable or state");

  TensorFunction fn(space, order, kind);
  std::vector<bool> seen(static_cast<size_t>(fn.flat_count()), false);
  std::istringstream in(read_file(csv_path));
  std::string line;
  if (!std::getline(in, line)) throw config_error("tensor CSV is empty");
  std::array<int, TensorFunction::kOrderCap> d{};
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    for (int i = 0; i < order; ++i) {
      if (!std::getline(row, cell, ','))
        throw config_error("tensor CSV row with too few columns");
      d[static_cast<size_t>(i)] = std::stoi(cell);
      if (d[static_cast<size_t>(i)] < 0 || d[static_cast<size_t>(i)] >= K)
        throw config_error("tensor CSV index out of range");
    }
    if (!std::getline(row, cell, ','))
      throw config_error("tensor CSV row missing value");
    const std::int64_t f = encode_multi(d.data(), order, K);
    fn.values()[f] = std::stod(cell);
    seen[static_cast<size_t>(f)] = true;
  }
  for (bool s : seen)
    if (!s) throw config_error("tensor CSV does not cover every multi-index");
  return fn;
}

}  // namespace kinhier
