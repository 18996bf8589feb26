#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pong/policy.hpp"

namespace pong {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& what) { throw ParseError("weights file: " + what); }

[[noreturn]] void fail_layer(std::size_t layer, const std::string& what) {
  fail("layer " + std::to_string(layer) + ": " + what);
}

std::vector<double> read_numbers(const json& node, std::size_t layer, const char* field) {
  if (!node.is_array()) fail_layer(layer, std::string(field) + " is not an array");
  std::vector<double> out;
  out.reserve(node.size());
  for (const auto& v : node) {
    if (!v.is_number()) fail_layer(layer, std::string(field) + " holds a non-numeric entry");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

std::string weights_document(const Network& params, const std::string& provenance_json) {
  json doc;
  doc["format_version"] = 1;
  doc["layer_sizes"] = params.layer_sizes;
  json activations = json::array();
  for (std::size_t l = 0; l + 1 < params.layers.size(); ++l) activations.push_back("relu");
  activations.push_back("softmax");
  doc["activations"] = activations;
  doc["rng_seed"] = params.seed;
  json layers = json::array();
  for (const auto& layer : params.layers) {
    // stored row-major: row r is neuron r's incoming weights
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows =
        layer.weights;
    layers.push_back({{"weights", std::vector<double>(rows.data(), rows.data() + rows.size())},
                      {"bias", std::vector<double>(layer.bias.data(),
                                                   layer.bias.data() + layer.bias.size())}});
  }
  doc["layers"] = std::move(layers);
  if (!provenance_json.empty()) doc["provenance"] = json::parse(provenance_json);
  return doc.dump() + "\n";
}

Network parse_weights_document(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(std::string("malformed document: ") + e.what());
  }
  if (!doc.is_object()) fail("top level is not an object");
  if (doc.value("format_version", 0) != 1) fail("unsupported or missing format_version");
  if (!doc.contains("layer_sizes") || !doc["layer_sizes"].is_array()) fail("missing layer_sizes");
  if (!doc.contains("layers") || !doc["layers"].is_array()) fail("missing layers");

  Network params;
  for (const auto& n : doc["layer_sizes"]) {
    if (!n.is_number_integer() || n.get<long long>() <= 0) fail("layer_sizes must be positive");
    params.layer_sizes.push_back(n.get<int>());
  }
  try {
    validate_layer_spec(params.layer_sizes);
  } catch (const ArgumentError& e) {
    fail(e.what());
  }
  if (doc.contains("rng_seed")) params.seed = doc["rng_seed"].get<std::uint64_t>();

  const auto& layers = doc["layers"];
  if (layers.size() + 1 != params.layer_sizes.size()) {
    fail("declares " + std::to_string(params.layer_sizes.size() - 1) + " layers but holds " +
         std::to_string(layers.size()));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& node = layers[l];
    if (!node.is_object() || !node.contains("weights") || !node.contains("bias")) {
      fail_layer(l, "missing weights or bias");
    }
    const auto rows = static_cast<std::size_t>(params.layer_sizes[l + 1]);
    const auto cols = static_cast<std::size_t>(params.layer_sizes[l]);
    const auto weights = read_numbers(node["weights"], l, "weights");
    const auto bias = read_numbers(node["bias"], l, "bias");
    if (weights.size() != rows * cols) {
      fail_layer(l, "weights hold " + std::to_string(weights.size()) + " values, shape " +
                        std::to_string(rows) + "x" + std::to_string(cols) + " needs " +
                        std::to_string(rows * cols));
    }
    if (bias.size() != rows) {
      fail_layer(l, "bias holds " + std::to_string(bias.size()) + " values, expected " +
                        std::to_string(rows));
    }
    DenseLayer<double> layer;
    layer.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                   Eigen::RowMajor>>(weights.data(), rows, cols);
    layer.bias = Eigen::Map<const Eigen::VectorXd>(bias.data(), rows);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

void save_weights(const Network& params, const std::string& path,
                  const std::string& provenance_json) {
  const auto text = weights_document(params, provenance_json);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out.flush()) throw std::runtime_error("failed writing weights to '" + path + "'");
}

Network load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open weights file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_weights_document(buffer.str());
}

}  // namespace pong
