#include "rograd/encoder.hpp"

#include <cctype>

#define CPPHTTPLIB_NO_EXCEPTIONS 0
#include <httplib.h>
#include <nlohmann/json.hpp>

using nlohmann::json;

namespace rograd {

Eigen::VectorXf Encoder::encode_one(const std::string& text) {
  Eigen::MatrixXf m = encode({text});
  return m.row(0).transpose();
}

HashEncoder::HashEncoder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim <= 0) fail(ErrorKind::invalid_argument, "HashEncoder dimension must be positive");
}

Eigen::MatrixXf HashEncoder::encode(const std::vector<std::string>& texts) {
  Eigen::MatrixXf out(static_cast<Eigen::Index>(texts.size()), dim_);
  out.setZero();
  for (std::size_t t = 0; t < texts.size(); ++t) {
    const std::string& text = texts[t];
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      std::uint64_t h = mix64(hash_str(token), seed_);
      int bucket = static_cast<int>(h % static_cast<std::uint64_t>(dim_));
      float sign = (h >> 63) ? 1.0f : -1.0f;
      out(static_cast<Eigen::Index>(t), bucket) += sign;
      token.clear();
    };
    for (char raw : text) {
      unsigned char c = static_cast<unsigned char>(raw);
      if (std::isalnum(c) || c == '_')
        token.push_back(static_cast<char>(std::tolower(c)));
      else
        flush();
    }
    flush();
    float norm = out.row(static_cast<Eigen::Index>(t)).norm();
    if (norm > 0.0f) out.row(static_cast<Eigen::Index>(t)) /= norm;
  }
  return out;
}

HttpEncoder::HttpEncoder(HttpEncoderConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty())
    fail(ErrorKind::invalid_argument, "HttpEncoder requires an endpoint");
}

namespace {

// Splits e.g. "http://host:8080/embed" into client base and path.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = endpoint.find('/', host_start);
  if (path_start == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

}  // namespace

Eigen::MatrixXf HttpEncoder::encode(const std::vector<std::string>& texts) {
  auto [base, path] = split_endpoint(config_.endpoint);
  httplib::Client client(base);
  client.set_read_timeout(config_.timeout_seconds, 0);
  client.set_connection_timeout(config_.timeout_seconds, 0);

  json body = {{"texts", texts}};
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) fail(ErrorKind::io, "embedding endpoint unreachable: " + config_.endpoint);
  if (res->status != 200)
    fail(ErrorKind::io, "embedding endpoint returned status " + std::to_string(res->status));

  json doc;
  try {
    doc = json::parse(res->body);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("embedding reply parse error: ") + e.what());
  }
  if (!doc.contains("embeddings") || !doc["embeddings"].is_array())
    fail(ErrorKind::parse, "embedding reply missing 'embeddings' array");
  const auto& rows = doc["embeddings"];
  if (rows.size() != texts.size())
    fail(ErrorKind::parse, "embedding reply row count mismatch");

  Eigen::MatrixXf out(static_cast<Eigen::Index>(texts.size()), config_.dimension);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (static_cast<int>(row.size()) != config_.dimension)
      fail(ErrorKind::parse, "embedding reply dimension mismatch");
    for (int j = 0; j < config_.dimension; ++j)
      out(static_cast<Eigen::Index>(i), j) = row[static_cast<std::size_t>(j)].get<float>();
  }
  if (!out.allFinite()) fail(ErrorKind::parse, "embedding reply contains non-finite values");
  return out;
}

}  // namespace rograd
