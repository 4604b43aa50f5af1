#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "consensus/metrics.hpp"

using namespace consensus;

TEST(Miou, PerfectPrediction) {
  const std::vector<int> truth{0, 1, 2, 2, 1};
  EXPECT_EQ(miou(truth, truth, 3), 1.0);
}

TEST(Miou, DisjointSingleClassMaps) {
  const std::vector<int> pred(4, 0), truth(4, 1);
  ConfusionMatrix m(2);
  m.add(pred, truth);
  EXPECT_EQ(m.class_iou(), (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(m.miou(), 0.0);
}

// truth [0 0; 1 1], pred [0 0; 0 1]: IoU_0 = 2/3, IoU_1 = 1/2.
TEST(Miou, TwoByTwoHandCount) {
  const std::vector<int> truth{0, 0, 1, 1}, pred{0, 0, 0, 1};
  ConfusionMatrix m(2);
  m.add(pred, truth);
  const auto iou = m.class_iou();
  EXPECT_NEAR(iou[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(iou[1], 0.5, 1e-15);
  EXPECT_NEAR(m.miou(), 7.0 / 12.0, 1e-15);
}

TEST(Miou, AbsentClassesSkipped) {
  const std::vector<int> truth{0, 0, 2, 2}, pred{0, 0, 2, 2};
  ConfusionMatrix m(4);
  m.add(pred, truth);
  EXPECT_EQ(m.class_iou()[1], -1.0);
  EXPECT_EQ(m.miou(), 1.0);
}

TEST(Miou, IgnoreLabelSkipped) {
  const std::vector<int> truth{0, 255, 1}, pred{0, 1, 1};
  EXPECT_EQ(miou(pred, truth, 2), 1.0);
}

TEST(Miou, OutOfRangeThrows) {
  const std::vector<int> truth{0, 3}, pred{0, 1};
  EXPECT_THROW(miou(pred, truth, 3), std::out_of_range);
  EXPECT_THROW(miou(truth, pred, 3), std::out_of_range);
}

TEST(Miou, SymmetricUnderClassPermutation) {
  std::mt19937_64 rng(81);
  std::uniform_int_distribution<int> cls(0, 4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> pred(64), truth(64), perm{0, 1, 2, 3, 4};
    for (auto& v : pred) v = cls(rng);
    for (auto& v : truth) v = cls(rng);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> p2(64), t2(64);
    for (std::size_t k = 0; k < 64; ++k) {
      p2[k] = perm[static_cast<std::size_t>(pred[k])];
      t2[k] = perm[static_cast<std::size_t>(truth[k])];
    }
    EXPECT_NEAR(miou(pred, truth, 5), miou(p2, t2, 5), 1e-15);
  }
}

TEST(Miou, BoundedInUnitInterval) {
  std::mt19937_64 rng(82);
  std::uniform_int_distribution<int> cls(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> pred(30), truth(30);
    for (auto& v : pred) v = cls(rng);
    for (auto& v : truth) v = cls(rng);
    const double m = miou(pred, truth, 4);
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0);
  }
}

namespace {

// 1x6 strip: background, instance 1 (cat 1) on pixels 1-2, instance 2 (cat 1) on 3-4, background.
SceneSample strip() {
  SceneSample s;
  s.height = 1;
  s.width = 6;
  s.labels = {0, 1, 1, 1, 1, 0};
  s.instances = {0, 1, 1, 2, 2, 0};
  s.instance_category = {0, 1, 1};
  return s;
}

}  // namespace

TEST(Consistency, PerfectPrediction) {
  const SceneSample s = strip();
  const ConsistencyStats st = consistency_stats(s.labels, s);
  EXPECT_EQ(st.intra_instance_purity, 1.0);
  EXPECT_EQ(st.cross_instance_agreement, 1.0);
  EXPECT_EQ(st.instances, 2u);
  EXPECT_EQ(st.pairs, 1u);
}

TEST(Consistency, ConstantPredictionIsPure) {
  const SceneSample s = strip();
  const std::vector<int> pred(6, 3);
  EXPECT_EQ(consistency_stats(pred, s).intra_instance_purity, 1.0);
}

TEST(Consistency, HalfWrongInstanceHandCount) {
  SceneSample s;
  s.height = 1;
  s.width = 6;
  s.labels = {1, 1, 1, 1, 2, 2};
  s.instances = {1, 1, 1, 1, 2, 2};
  s.instance_category = {0, 1, 2};
  // instance 1: pred {1, 3, 1, 3} -> tie, modal fraction 2/4; instance 2: pure
  const std::vector<int> pred{1, 3, 1, 3, 2, 2};
  const ConsistencyStats st = consistency_stats(pred, s);
  EXPECT_NEAR(st.intra_instance_purity, (0.5 + 1.0) / 2.0, 1e-15);
  EXPECT_EQ(st.pairs, 0u);
}

TEST(Consistency, DisagreeingInstancesOfOneCategory) {
  const SceneSample s = strip();
  const std::vector<int> pred{0, 1, 1, 2, 2, 0};
  const ConsistencyStats st = consistency_stats(pred, s);
  EXPECT_EQ(st.intra_instance_purity, 1.0);
  EXPECT_EQ(st.cross_instance_agreement, 0.0);
}

TEST(Consistency, AccumulatorPoolsAcrossImages) {
  const SceneSample s = strip();
  ConsistencyAccumulator acc;
  acc.add(std::vector<int>{0, 1, 1, 1, 1, 0}, s);
  acc.add(std::vector<int>{0, 1, 1, 2, 2, 0}, s);
  const ConsistencyStats st = acc.result();
  EXPECT_EQ(st.pairs, 2u);
  EXPECT_EQ(st.cross_instance_agreement, 0.5);
  EXPECT_EQ(st.instances, 4u);
}
