#include "covshift/parallel.hpp"
#include "covshift/rng.hpp"

#include <doctest.h>

#include <atomic>
#include <set>
#include <vector>

using namespace covshift;

TEST_SUITE("rng") {
  TEST_CASE("counter stream is a pure function of the key") {
    CounterRng a(42), b(42), c(43);
    std::vector<std::uint64_t> xa, xb, xc;
    for (int i = 0; i < 100; ++i) {
      xa.push_back(a());
      xb.push_back(b());
      xc.push_back(c());
    }
    CHECK(xa == xb);
    CHECK(xa != xc);
    CHECK(a.counter() == 100);
  }

  TEST_CASE("split_seed gives distinct children") {
    std::set<std::uint64_t> keys;
    for (std::uint64_t i = 0; i < 1000; ++i) keys.insert(split_seed(7, i));
    CHECK(keys.size() == 1000);
    CHECK(split_seed(7, 3) == split_seed(7, 3));
    CHECK(split_seed(7, 3) != split_seed(8, 3));
  }

  TEST_CASE("uniform lies in [0, 1) with mean near 1/2") {
    CounterRng rng(5);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      sum += u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  }

  TEST_CASE("index draws cover the range uniformly") {
    CounterRng rng(11);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 50000; ++i) ++counts[rng.index(5)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 400);
  }

  TEST_CASE("parallel_for runs every task and rethrows") {
    std::vector<int> hit(257, 0);
    parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] += 1; });
    for (int h : hit) CHECK(h == 1);
    CHECK_THROWS_AS(parallel_for(10, 3,
                                 [](std::size_t i) {
                                   if (i == 7) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
    CHECK(resolve_threads(3) == 3);
    CHECK(resolve_threads(0) >= 1);
  }
}
