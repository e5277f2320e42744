/* Copyright 2026 The contextst Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "contextst/routing.hpp"

#include <doctest.h>

using namespace contextst;

TEST_SUITE("routing") {

TEST_CASE("uniform routing gives unit load loss") {
  const Index M = 4, r = 2;
  RoutingAccumulator acc(M, r);
  const Eigen::RowVectorXd half = (Eigen::RowVectorXd(4) << 0.5, 0.5, 0.0, 0.0).finished();
  const Eigen::RowVectorXd other = (Eigen::RowVectorXd(4) << 0.0, 0.0, 0.5, 0.5).finished();
  for (int i = 0; i < 50; ++i) {
    acc.add({0, 1}, half);
    acc.add({2, 3}, other);
  }
  const auto s = acc.stats();
  CHECK(s.F.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.P.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(s.l_load - 1.0) < 1e-12);
  CHECK(load_balance_loss(s, M) == doctest::Approx(1.0));
}

TEST_CASE("collapse onto two experts doubles the loss") {
  RoutingAccumulator acc(4, 2);
  const Eigen::RowVectorXd g = (Eigen::RowVectorXd(4) << 0.5, 0.5, 0.0, 0.0).finished();
  for (int i = 0; i < 10; ++i) acc.add({0, 1}, g);
  CHECK(std::abs(acc.stats().l_load - 2.0) < 1e-12);
}

TEST_CASE("merging equals accumulating") {
  RoutingAccumulator a(3, 1), b(3, 1), all(3, 1);
  const Eigen::RowVectorXd g0 = (Eigen::RowVectorXd(3) << 1.0, 0.0, 0.0).finished();
  const Eigen::RowVectorXd g2 = (Eigen::RowVectorXd(3) << 0.0, 0.0, 1.0).finished();
  a.add({0}, g0);
  b.add({2}, g2);
  b.add({2}, g2);
  all.add({0}, g0);
  all.add({2}, g2);
  all.add({2}, g2);
  RoutingAccumulator merged;
  merged.merge(a);
  merged.merge(b);
  CHECK(merged.tokens() == 3);
  CHECK(merged.stats().F == all.stats().F);
  CHECK(merged.stats().P == all.stats().P);
}

TEST_CASE("empty accumulator has zero loss") {
  RoutingAccumulator acc(4, 2);
  CHECK(acc.stats().l_load == 0.0);
  CHECK(acc.stats().tokens == 0);
}

}
