// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "grad_cases.hpp"

using namespace shufflenas;
using namespace shufflenas::testing;

namespace {

constexpr int kInstances = 10;
constexpr double kTolerance = 1e-4;

class GradientCase : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientCase, MatchesCentralDifferences) {
  const auto cases = gradient_cases();
  const auto& c = cases.at(GetParam());
  for (int i = 0; i < kInstances; ++i) {
    Rng rng(derive_seed(static_cast<std::uint64_t>(i), c.name));
    const auto result = c.run(rng);
    EXPECT_GT(result.coordinates, 0) << c.name;
    EXPECT_LT(result.max_rel_error, kTolerance) << c.name << " instance " << i;
  }
}

std::string case_name(const ::testing::TestParamInfo<std::size_t>& info) {
  std::string name = gradient_cases().at(info.param).name;
  for (char& ch : name)
    if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
  return name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradientCase,
                         ::testing::Range<std::size_t>(0, gradient_cases().size()), case_name);

}  // namespace
