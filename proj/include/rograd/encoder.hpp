#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rograd/common.hpp"

namespace rograd {

// Text encoder boundary. Implementations must be deterministic for a fixed
// input and produce finite rows.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual Eigen::MatrixXf encode(const std::vector<std::string>& texts) = 0;
  virtual int dimension() const = 0;

  Eigen::VectorXf encode_one(const std::string& text);
};

// Signed feature hashing over word tokens, L2-normalized per row. Stands in
// for a sentence encoder when running offline: shared vocabulary yields high
// cosine, disjoint vocabulary near zero.
class HashEncoder : public Encoder {
 public:
  explicit HashEncoder(int dim = 256, std::uint64_t seed = 0);
  Eigen::MatrixXf encode(const std::vector<std::string>& texts) override;
  int dimension() const override { return dim_; }

 private:
  int dim_;
  std::uint64_t seed_;
};

// Adapter to an external sentence-embedding service:
// POST endpoint with {"texts": [...]} returning {"embeddings": [[...], ...]}.
struct HttpEncoderConfig {
  std::string endpoint;  // e.g. http://host:port/embed
  int dimension = 384;
  int timeout_seconds = 60;
};

class HttpEncoder : public Encoder {
 public:
  explicit HttpEncoder(HttpEncoderConfig config);
  Eigen::MatrixXf encode(const std::vector<std::string>& texts) override;
  int dimension() const override { return config_.dimension; }

 private:
  HttpEncoderConfig config_;
};

}  // namespace rograd
