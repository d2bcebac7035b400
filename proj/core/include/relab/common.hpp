// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace relab {

using MatF = Eigen::MatrixXf;
using VecF = Eigen::VectorXf;
using MatD = Eigen::MatrixXd;
using VecD = Eigen::VectorXd;

/// The three aligned forms a rule is expressed in.
enum class Form { formula, description, instance };

inline constexpr Form kAllForms[] = {Form::formula, Form::description, Form::instance};

const char* form_name(Form f);
Form form_from_name(const std::string& name);

// Error categories, mapped to CLI exit codes by the tool layer.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// FNV-1a, used wherever a stable content hash or derived seed is needed.
// std::hash is not pinned across library versions; this is.
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = kFnvOffset) {
  return fnv1a(s.data(), s.size(), h);
}

inline std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h = kFnvOffset) {
  return fnv1a(&v, sizeof(v), h);
}

/// Combine a base seed with stream identifiers into an independent substream seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t h = fnv1a_u64(base);
  h = fnv1a_u64(a, h);
  h = fnv1a_u64(b, h);
  return h;
}

}  // namespace relab
