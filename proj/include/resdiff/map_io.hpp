#pragma once

#include <string>
#include <vector>

#include "resdiff/map_core.hpp"

namespace resdiff {

/// A map file parsed but not yet validated.
struct MapDescription {
  std::string name;
  int dimension = 1;
  std::vector<PartitionCell> cells;
};

/// JSON map file: {"name", "dimension", "cells": [{"corner", "side", "rotation"
/// (rows), "offset" (optional, solved when absent), "target_cube"}]}, or
/// {"builtin": "doubling" | "asymmetric" | "quadrant" | "confined_doubling"}.
/// Throws ConfigInvalid on malformed input.
MapDescription parse_map_json(const std::string& text);

/// Builds and validates; throws Error with the first failing code and every
/// failed item in the message when the map is invalid.
BernoulliMap load_map_json(const std::string& text);
BernoulliMap load_map_file(const std::string& path);

std::string map_to_json(const BernoulliMap& map, const std::string& name = "");

BernoulliMap builtin_map(const std::string& name);

}  // namespace resdiff
