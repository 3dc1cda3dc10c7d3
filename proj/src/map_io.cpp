#include "resdiff/map_io.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace resdiff {

using nlohmann::json;

BernoulliMap builtin_map(const std::string& name) {
  if (name == "doubling") return maps::doubling();
  if (name == "asymmetric") return maps::asymmetric();
  if (name == "quadrant") return maps::quadrant();
  if (name == "confined_doubling") return maps::confined_doubling();
  throw Error(ErrorCode::ConfigInvalid, "unknown builtin map '" + name + "'");
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw Error(ErrorCode::ConfigInvalid, "unknown key '" + key + "' in " + where);
  }
}

MapDescription describe(const BernoulliMap& map, const std::string& name) {
  return {name, map.dim(), map.cells()};
}

}  // namespace

MapDescription parse_map_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("map parse error: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "map file must hold an object");
  if (j.contains("builtin")) {
    reject_unknown(j, {"builtin", "name"}, "map");
    auto name = j.at("builtin").get<std::string>();
    return describe(builtin_map(name), j.value("name", name));
  }
  reject_unknown(j, {"name", "dimension", "cells"}, "map");
  try {
    MapDescription out;
    out.name = j.value("name", std::string());
    out.dimension = j.at("dimension").get<int>();
    if (out.dimension < 1) throw Error(ErrorCode::ConfigInvalid, "dimension must be positive");
    const auto d = static_cast<std::size_t>(out.dimension);
    std::size_t index = 0;
    for (const auto& c : j.at("cells")) {
      const std::string where = "cell " + std::to_string(index++);
      reject_unknown(c, {"corner", "side", "rotation", "offset", "target_cube"}, where);
      auto corner = c.at("corner").get<Point>();
      auto side = c.at("side").get<double>();
      auto target = c.at("target_cube").get<LatticeVec>();
      Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
      if (c.contains("rotation")) {
        auto rows = c.at("rotation").get<std::vector<std::vector<double>>>();
        if (rows.size() != d) throw Error(ErrorCode::ConfigInvalid, where + ": rotation must have " + std::to_string(d) + " rows");
        for (std::size_t r = 0; r < d; ++r) {
          if (rows[r].size() != d) throw Error(ErrorCode::ConfigInvalid, where + ": rotation row length mismatch");
          for (std::size_t k = 0; k < d; ++k) rot(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
        }
      }
      if (corner.size() != d || target.size() != d) {
        throw Error(ErrorCode::ConfigInvalid, where + ": corner and target_cube need " + std::to_string(d) + " entries");
      }
      PartitionCell cell;
      try {
        cell = make_cell(corner, side, rot, target);
      } catch (const Error& e) {
        throw Error(ErrorCode::ConfigInvalid, where + ": " + e.what());
      }
      if (c.contains("offset")) {
        auto offset = c.at("offset").get<Point>();
        if (offset.size() != d) throw Error(ErrorCode::ConfigInvalid, where + ": offset length mismatch");
        cell.offset = offset;
      }
      out.cells.push_back(std::move(cell));
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("map field error: ") + e.what());
  }
}

BernoulliMap load_map_json(const std::string& text) {
  auto desc = parse_map_json(text);
  BernoulliMap map = [&] {
    try {
      return BernoulliMap(desc.dimension, desc.cells);
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigInvalid, e.what());
    }
  }();
  auto report = validate_map(map);
  if (!report.ok()) {
    std::string msg = "invalid map:";
    for (const auto& item : report.items) {
      if (!item.pass) msg += " " + item.name + " (" + item.detail + ");";
    }
    throw Error(report.errors.front(), msg);
  }
  return map;
}

BernoulliMap load_map_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open map file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_map_json(ss.str());
}

std::string map_to_json(const BernoulliMap& map, const std::string& name) {
  json j;
  if (!name.empty()) j["name"] = name;
  j["dimension"] = map.dim();
  j["cells"] = json::array();
  for (const auto& c : map.cells()) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index r = 0; r < c.rotation.rows(); ++r) {
      rows.emplace_back();
      for (Eigen::Index k = 0; k < c.rotation.cols(); ++k) rows.back().push_back(c.rotation(r, k));
    }
    j["cells"].push_back({{"corner", c.corner}, {"side", c.side}, {"rotation", rows}, {"offset", c.offset},
                          {"target_cube", c.target}});
  }
  return j.dump(1);
}

}  // namespace resdiff
