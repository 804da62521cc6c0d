#pragma once

#include <string>

#include "earlock/evaluation.hpp"

namespace earlock {

// Versioned text container ("EARTPL v1") embedding the GMM serialization and
// per-section feature dumps. Deterministic byte-for-byte for fixed inputs.
std::string serialize_template(const Template& t);
Template parse_template(const std::string& text);

void save_template(const Template& t, const std::string& path);
Template load_template(const std::string& path);

}  // namespace earlock
