#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "pong/engine.hpp"

namespace pong {

/// {0,1} grid after cropping and downsampling.
using BinaryGrid = Frame;

/// Signed difference image in {-1, 0, +1}.
using ModelInput = Eigen::Array<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct CropRect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
};

/// The whole field; every pixel of the custom engine is a legal ball/paddle location.
CropRect full_field(const GameConfig& config);

/// Crops, keeps the top-left pixel of every 2x2 block, and maps nonzero to 1.
/// Throws ArgumentError for odd or out-of-bounds crops.
BinaryGrid downsample_binarize(const Frame& frame, const CropRect& crop);

/// current - previous, with a missing previous frame read as all zeros.
ModelInput frame_difference(const BinaryGrid& current, const BinaryGrid* previous);
inline ModelInput frame_difference(const BinaryGrid& current) {
  return frame_difference(current, nullptr);
}
inline ModelInput frame_difference(const BinaryGrid& current, const BinaryGrid& previous) {
  return frame_difference(current, &previous);
}

/// Row-major flattening, as the network and the wire protocol index it.
Eigen::VectorXd flatten(const ModelInput& input);
Eigen::SparseVector<double> flatten_sparse(const ModelInput& input);

/// Stateful wrapper remembering the previous downsampled frame of an episode.
class FramePreprocessor {
 public:
  explicit FramePreprocessor(const CropRect& crop) : crop_(crop) {}

  ModelInput operator()(const Frame& frame);
  void reset() { previous_.reset(); }

 private:
  CropRect crop_;
  std::optional<BinaryGrid> previous_;
};

}  // namespace pong
