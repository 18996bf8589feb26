#include "pong/preprocess.hpp"

#include <string>

#include "pong/errors.hpp"

namespace pong {

CropRect full_field(const GameConfig& config) {
  return {0, 0, config.field_height, config.field_width};
}

BinaryGrid downsample_binarize(const Frame& frame, const CropRect& crop) {
  if (crop.height <= 0 || crop.width <= 0 || crop.height % 2 != 0 || crop.width % 2 != 0) {
    throw ArgumentError("crop dimensions must be positive and even, got " +
                        std::to_string(crop.height) + "x" + std::to_string(crop.width));
  }
  if (crop.top < 0 || crop.left < 0 || crop.top + crop.height > frame.rows() ||
      crop.left + crop.width > frame.cols()) {
    throw ArgumentError("crop rectangle exceeds the frame");
  }
  const auto rows = Eigen::seqN(crop.top, crop.height / 2, 2);
  const auto cols = Eigen::seqN(crop.left, crop.width / 2, 2);
  return (frame(rows, cols) != 0).cast<std::uint8_t>();
}

ModelInput frame_difference(const BinaryGrid& current, const BinaryGrid* previous) {
  if (previous == nullptr) return current.cast<std::int8_t>();
  if (previous->rows() != current.rows() || previous->cols() != current.cols()) {
    throw ArgumentError("frame_difference: dimension mismatch");
  }
  return current.cast<std::int8_t>() - previous->cast<std::int8_t>();
}

Eigen::VectorXd flatten(const ModelInput& input) {
  return Eigen::Map<const Eigen::Array<std::int8_t, Eigen::Dynamic, 1>>(input.data(), input.size())
      .cast<double>()
      .matrix();
}

Eigen::SparseVector<double> flatten_sparse(const ModelInput& input) {
  Eigen::SparseVector<double> out(input.size());
  const std::int8_t* data = input.data();
  for (Eigen::Index i = 0; i < input.size(); ++i) {
    if (data[i] != 0) out.insert(i) = data[i];
  }
  return out;
}

ModelInput FramePreprocessor::operator()(const Frame& frame) {
  auto current = downsample_binarize(frame, crop_);
  auto input = frame_difference(current, previous_ ? &*previous_ : nullptr);
  previous_ = std::move(current);
  return input;
}

}  // namespace pong
