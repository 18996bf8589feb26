#include <gtest/gtest.h>

#include "pong/errors.hpp"
#include "pong/opponents.hpp"
#include "pong/preprocess.hpp"

using namespace pong;

namespace {

Frame blank(int rows = 160, int cols = 192) { return Frame::Zero(rows, cols); }

BinaryGrid random_grid(Rng& rng, int rows, int cols) {
  BinaryGrid g(rows, cols);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.coin() ? 1 : 0;
  return g;
}

}  // namespace

TEST(Downsample, ZeroFrameStaysZero) {
  const auto out = downsample_binarize(blank(), {0, 0, 160, 192});
  EXPECT_EQ(out.rows(), 80);
  EXPECT_EQ(out.cols(), 96);
  EXPECT_EQ(out.cast<int>().sum(), 0);
}

TEST(Downsample, EvenAlignedBallKeepsOnePixel) {
  Frame f = blank();
  f.block(40, 60, 2, 2).setOnes();
  const auto out = downsample_binarize(f, {0, 0, 160, 192});
  EXPECT_EQ(out.cast<int>().sum(), 1);
  EXPECT_EQ(out(20, 30), 1);
}

TEST(Downsample, OddSinglePixelVanishes) {
  Frame f = blank();
  f(41, 61) = 1;
  EXPECT_EQ(downsample_binarize(f, {0, 0, 160, 192}).cast<int>().sum(), 0);
  f(41, 61) = 0;
  f(40, 61) = 1;  // odd column alone is enough to miss it
  EXPECT_EQ(downsample_binarize(f, {0, 0, 160, 192}).cast<int>().sum(), 0);
}

TEST(Downsample, DiameterTwoNeverVanishes) {
  for (int y = 0; y + 2 <= 160; ++y) {
    for (int x = 0; x + 2 <= 192; x += 7) {
      Frame f = blank();
      f.block(y, x, 2, 2).setOnes();
      ASSERT_GE(downsample_binarize(f, {0, 0, 160, 192}).cast<int>().sum(), 1) << y << "," << x;
    }
  }
}

TEST(Downsample, BinarizesGrayscale) {
  Frame f = blank(4, 4);
  f(0, 0) = 200;
  f(2, 2) = 17;
  const auto out = downsample_binarize(f, {0, 0, 4, 4});
  EXPECT_EQ(out(0, 0), 1);
  EXPECT_EQ(out(1, 1), 1);
}

TEST(Downsample, CropOffsetsIndexing) {
  Frame f = blank(10, 10);
  f(4, 6) = 1;
  const auto out = downsample_binarize(f, {2, 2, 6, 6});
  EXPECT_EQ(out.rows(), 3);
  EXPECT_EQ(out(1, 2), 1);
  EXPECT_EQ(out.cast<int>().sum(), 1);
}

TEST(Downsample, RejectsBadCrops) {
  const Frame f = blank();
  EXPECT_THROW(downsample_binarize(f, {0, 0, 159, 192}), ArgumentError);
  EXPECT_THROW(downsample_binarize(f, {0, 0, 160, 191}), ArgumentError);
  EXPECT_THROW(downsample_binarize(f, {2, 0, 160, 192}), ArgumentError);
  EXPECT_THROW(downsample_binarize(f, {-2, 0, 10, 10}), ArgumentError);
  EXPECT_THROW(downsample_binarize(f, {0, 0, 0, 10}), ArgumentError);
}

TEST(FrameDifference, IdenticalFramesCancel) {
  Rng rng(1);
  const auto g = random_grid(rng, 80, 96);
  EXPECT_TRUE((frame_difference(g, g) == 0).all());
}

TEST(FrameDifference, FirstFrameIsItself) {
  Rng rng(2);
  const auto g = random_grid(rng, 80, 96);
  EXPECT_TRUE((frame_difference(g) == g.cast<std::int8_t>()).all());
}

TEST(FrameDifference, MovedBallGivesSignedPairs) {
  // 2x2-pixel ball at grid resolution moves right by 3, paddles fixed
  BinaryGrid before = BinaryGrid::Zero(80, 96);
  BinaryGrid after = BinaryGrid::Zero(80, 96);
  before.block(10, 4, 8, 2).setOnes();
  after.block(10, 4, 8, 2).setOnes();
  before.block(40, 30, 2, 2).setOnes();
  after.block(40, 33, 2, 2).setOnes();
  const auto d = frame_difference(after, before);
  EXPECT_EQ((d != 0).count(), 2 * 4);
  EXPECT_EQ((d == 1).count(), 4);
  EXPECT_EQ((d == -1).count(), 4);
  EXPECT_EQ(d(40, 33), 1);
  EXPECT_EQ(d(40, 30), -1);
}

TEST(FrameDifference, RejectsMismatch) {
  EXPECT_THROW(frame_difference(BinaryGrid::Zero(4, 4), BinaryGrid::Zero(4, 6)), ArgumentError);
}

TEST(FrameDifference, ReversingTimeNegates) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_grid(rng, 12, 10);
    const auto b = random_grid(rng, 12, 10);
    const ModelInput ab = frame_difference(a, b);
    const ModelInput ba = frame_difference(b, a);
    ASSERT_TRUE((ab == -ba).all());
    ASSERT_TRUE(((ab >= -1) && (ab <= 1)).all());
  }
}

TEST(Flatten, RowMajorDenseAndSparseAgree) {
  ModelInput m = ModelInput::Zero(3, 4);
  m(1, 2) = 1;
  m(2, 0) = -1;
  const auto dense = flatten(m);
  const auto sparse = flatten_sparse(m);
  EXPECT_EQ(dense.size(), 12);
  EXPECT_EQ(dense(6), 1.0);
  EXPECT_EQ(dense(8), -1.0);
  EXPECT_EQ(sparse.nonZeros(), 2);
  EXPECT_TRUE(Eigen::VectorXd(sparse).isApprox(dense));
}

TEST(Pipeline, DefaultInputIs80By96) {
  FramePreprocessor pre(full_field(GameConfig{}));
  const auto input = pre(render(new_game(GameConfig{})));
  EXPECT_EQ(input.rows(), 80);
  EXPECT_EQ(input.cols(), 96);
  EXPECT_EQ(flatten(input).size(), 7680);
}

// With the default frame skip and a 2 px ball, every mid-rally input shows the ball.
TEST(Pipeline, DefaultConfigBallAlwaysVisibleInDifference) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GameConfig config;
    config.seed = seed;
    auto state = new_game(config);
    FramePreprocessor pre(full_field(config));
    pre(render(state));
    Rng rng(seed);
    while (!state.done) {
      const auto r = step(state, consistently_tracking(make_view(state, Side::Left)),
                          random_policy(rng));
      const auto input = pre(r.frame);
      if (r.left_reward != 0) continue;  // re-serve or final exit
      // ball square in grid coordinates: rows/cols whose even full-res pixel it covers
      const int y = static_cast<int>(state.ball_y);
      const int x = static_cast<int>(state.ball_x);
      int lit = 0;
      for (int row = (y + 1) / 2; 2 * row < y + config.ball_diameter; ++row) {
        for (int c = (x + 1) / 2; 2 * c < x + config.ball_diameter; ++c) lit += input(row, c) == 1;
      }
      ASSERT_GT(lit, 0) << "seed " << seed << " tick " << state.tick;
    }
  }
}
