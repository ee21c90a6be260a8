#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cdm {

/// Broad failure classes; the CLI maps each to a distinct exit code.
enum class ErrorClass { usage, data, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, std::string kind, const std::string& what)
      : std::runtime_error(what), class_(cls), kind_(std::move(kind)) {}

  ErrorClass error_class() const noexcept { return class_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  ErrorClass class_;
  std::string kind_;
};

class ShapeError : public Error {
 public:
  ShapeError(const std::string& layer, const std::string& detail)
      : Error(ErrorClass::usage, "shape_error", "shape mismatch at " + layer + ": " + detail),
        layer_(layer) {}
  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorClass::usage, "config_error", what) {}
};

class VariantMismatch : public Error {
 public:
  explicit VariantMismatch(const std::string& what)
      : Error(ErrorClass::usage, "variant_mismatch", what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorClass::data, "data_error", what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what)
      : Error(ErrorClass::numerical, "domain_error", what) {}
};

class DivergedTraining : public Error {
 public:
  DivergedTraining(std::size_t batch_index, const std::string& detail)
      : Error(ErrorClass::numerical, "diverged_training",
              "non-finite loss at batch " + std::to_string(batch_index) + ": " + detail),
        batch_index_(batch_index) {}
  std::size_t batch_index() const noexcept { return batch_index_; }

 private:
  std::size_t batch_index_;
};

class SamplerDivergence : public Error {
 public:
  SamplerDivergence(std::size_t index, const std::string& detail)
      : Error(ErrorClass::numerical, "sampler_divergence",
              "non-finite sampler state at step " + std::to_string(index) + ": " + detail),
        index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class SampleRejection : public Error {
 public:
  explicit SampleRejection(const std::string& what)
      : Error(ErrorClass::numerical, "sample_rejection", what) {}
};

}  // namespace cdm
