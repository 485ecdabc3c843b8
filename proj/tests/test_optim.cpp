#include <gtest/gtest.h>

#include "latreg/error.hpp"
#include "latreg/optim.hpp"

using namespace latreg;

TEST(AdamW, ZeroGradZeroDecayLeavesParamsUnchanged) {
  AdamW::Config cfg;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg);
  opt.add_param("p", 2, 2);
  Eigen::MatrixXd p = Eigen::MatrixXd::Ones(2, 2);
  const Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2, 2);
  opt.step({&p}, {&g});
  EXPECT_EQ((p - Eigen::MatrixXd::Ones(2, 2)).norm(), 0.0);
}

TEST(AdamW, FirstStepMovesBySignTimesLr) {
  AdamW::Config cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg);
  opt.add_param("p", 1, 3);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(1, 3);
  Eigen::MatrixXd g(1, 3);
  g << 0.5, -2.0, 1e-3;
  opt.step({&p}, {&g});
  // bias correction makes m_hat / sqrt(v_hat) = sign(g) on the first step
  EXPECT_NEAR(p(0, 0), -0.01, 1e-6);
  EXPECT_NEAR(p(0, 1), 0.01, 1e-6);
  EXPECT_NEAR(p(0, 2), -0.01, 1e-5);
}

TEST(AdamW, DecayOnlyShrinksMultiplicatively) {
  AdamW::Config cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  AdamW opt(cfg);
  opt.add_param("p", 1, 1);
  Eigen::MatrixXd p = Eigen::MatrixXd::Ones(1, 1) * 4.0;
  const Eigen::MatrixXd g = Eigen::MatrixXd::Zero(1, 1);
  opt.step({&p}, {&g});
  EXPECT_NEAR(p(0, 0), 4.0 * (1.0 - 0.1 * 0.5), 1e-15);
}

TEST(AdamW, ZeroLrIsIdentity) {
  AdamW::Config cfg;
  cfg.lr = 0.0;
  AdamW opt(cfg);
  opt.add_param("p", 1, 2);
  Eigen::MatrixXd p(1, 2);
  p << 3.0, -1.5;
  Eigen::MatrixXd g(1, 2);
  g << 10.0, -4.0;
  const Eigen::MatrixXd before = p;
  opt.step({&p}, {&g});
  EXPECT_EQ((p - before).norm(), 0.0);
}

TEST(AdamW, NonFiniteGradientNamesParameter) {
  AdamW opt({});
  opt.add_param("weights.w3", 1, 1);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(1, 1);
  Eigen::MatrixXd g(1, 1);
  g << std::numeric_limits<double>::quiet_NaN();
  try {
    opt.step({&p}, {&g});
    FAIL() << "expected error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("weights.w3"), std::string::npos);
  }
}

TEST(AdamW, UndecayedSlotSkipsShrink) {
  AdamW::Config cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  AdamW opt(cfg);
  opt.add_param("p", 1, 1, /*decayed=*/false);
  Eigen::MatrixXd p = Eigen::MatrixXd::Ones(1, 1) * 4.0;
  const Eigen::MatrixXd g = Eigen::MatrixXd::Zero(1, 1);
  opt.step({&p}, {&g});
  EXPECT_EQ(p(0, 0), 4.0);
}

TEST(Plateau, StrictlyDecreasingNeverReducesOrStops) {
  PlateauSchedule sched(1e-2, {10.0, 10, 100});
  for (int i = 0; i < 500; ++i) {
    const auto out = sched.observe(1.0 / (i + 1));
    EXPECT_FALSE(out.reduced);
    EXPECT_FALSE(out.stop);
  }
  EXPECT_EQ(sched.lr(), 1e-2);
}

TEST(Plateau, TenIdleStepsDivideLrByTen) {
  PlateauSchedule sched(1e-2, {10.0, 10, 100});
  sched.observe(1.0);
  for (int i = 0; i < 9; ++i) {
    EXPECT_FALSE(sched.observe(2.0).reduced);
  }
  const auto out = sched.observe(2.0);  // 10th idle observation
  EXPECT_TRUE(out.reduced);
  EXPECT_NEAR(sched.lr(), 1e-3, 1e-18);
}

TEST(Plateau, HundredIdleStepsSignalStop) {
  PlateauSchedule sched(1e-2, {10.0, 10, 100});
  sched.observe(1.0);
  bool stopped = false;
  for (int i = 0; i < 100; ++i) {
    if (sched.observe(1.0).stop) {
      stopped = true;
      EXPECT_EQ(i, 99);  // exactly the 100th idle observation
      break;
    }
  }
  EXPECT_TRUE(stopped);
}

TEST(Plateau, EqualLossIsNotImprovement) {
  PlateauSchedule sched(1e-2, {10.0, 3, 100});
  sched.observe(1.0);
  sched.observe(1.0);
  sched.observe(1.0);
  const auto out = sched.observe(1.0);
  EXPECT_TRUE(out.reduced);
}
