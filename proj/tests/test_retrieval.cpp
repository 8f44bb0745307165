// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>

#include "concepthash/errors.hpp"
#include "concepthash/retrieval.hpp"
#include "test_util.hpp"

using namespace concepthash;

namespace {

using Signs = std::vector<int>;

HashCode from_signs(const Signs& s) {
  HashCode c(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) c.set(j, s[j] > 0);
  return c;
}

std::vector<Signs> random_signs(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Signs> out(n, Signs(k));
  for (auto& s : out)
    for (auto& v : s) v = (rng() & 1U) ? 1 : -1;
  return out;
}

CodeDatabase make_db(const std::vector<Signs>& signs, std::vector<int> labels, std::vector<int> family = {}) {
  CodeDatabase db;
  db.bits = signs.empty() ? 0 : signs[0].size();
  for (const auto& s : signs) db.codes.push_back(from_signs(s));
  db.labels = std::move(labels);
  db.family_labels = std::move(family);
  return db;
}

std::size_t naive_distance(const Signs& a, const Signs& b) {
  std::size_t d = 0;
  for (std::size_t j = 0; j < a.size(); ++j) d += a[j] != b[j];
  return d;
}

// Brute force: sort by (distance, index), then AP from the definition.
double naive_map(const std::vector<Signs>& q, const std::vector<int>& ql, const std::vector<Signs>& db,
                 const std::vector<int>& dl, std::size_t r, bool same_set) {
  double total = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<std::pair<std::size_t, std::size_t>> keyed;
    for (std::size_t j = 0; j < db.size(); ++j) {
      if (same_set && j == i) continue;
      keyed.emplace_back(naive_distance(q[i], db[j]), j);
    }
    std::sort(keyed.begin(), keyed.end());
    std::size_t relevant_total = 0;
    for (const auto& [d, j] : keyed) relevant_total += dl[j] == ql[i];
    const std::size_t limit = r == 0 ? keyed.size() : std::min(r, keyed.size());
    double sum = 0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < limit; ++k)
      if (dl[keyed[k].second] == ql[i]) {
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(k + 1);
      }
    const std::size_t denom = std::min(limit, relevant_total);
    total += denom == 0 ? 0.0 : sum / static_cast<double>(denom);
  }
  return total / static_cast<double>(q.size());
}

struct EnvGuard {
  explicit EnvGuard(const char* value) { setenv("CONCEPTHASH_THREADS", value, 1); }
  ~EnvGuard() { unsetenv("CONCEPTHASH_THREADS"); }
};

}  // namespace

TEST_CASE("hamming distance") {
  const auto s = random_signs(3, 16, 1);
  const HashCode a = from_signs(s[0]);
  CHECK(hamming_distance(a, a) == 0);
  Signs comp = s[0];
  for (auto& v : comp) v = -v;
  CHECK(hamming_distance(a, from_signs(comp)) == 16);

  for (std::size_t k : {5u, 64u, 100u, 257u}) {
    const auto t = random_signs(20, k, k);
    for (std::size_t i = 0; i + 2 < t.size(); ++i) {
      const HashCode x = from_signs(t[i]), y = from_signs(t[i + 1]), z = from_signs(t[i + 2]);
      CHECK(hamming_distance(x, y) == naive_distance(t[i], t[i + 1]));
      CHECK(hamming_distance(x, y) == hamming_distance(y, x));
      CHECK(hamming_distance(x, z) <= hamming_distance(x, y) + hamming_distance(y, z));
      CHECK((hamming_distance(x, y) == 0) == (t[i] == t[i + 1]));
    }
  }
  CHECK_THROWS_AS(hamming_distance(HashCode(8), HashCode(9)), DimensionError);
}

TEST_CASE("rank_database") {
  SUBCASE("single item") {
    const auto db = make_db(random_signs(1, 8, 2), {0});
    const auto r = rank_database(db.codes[0], db);
    CHECK(r.order == std::vector<std::size_t>{0});
  }
  SUBCASE("all-equal codes keep index order") {
    const std::vector<Signs> same(6, Signs(8, 1));
    const auto db = make_db(same, {0, 1, 2, 3, 4, 5});
    const auto r = rank_database(db.codes[0], db);
    CHECK(r.order == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
    CHECK(rank_database(db.codes[0], db, 2).order == std::vector<std::size_t>{0, 1, 3, 4, 5});
  }
  SUBCASE("random database matches the naive sort") {
    const auto s = random_signs(300, 12, 3);
    const auto db = make_db(s, std::vector<int>(300, 0));
    const auto q = random_signs(1, 12, 4)[0];
    const auto r = rank_database(from_signs(q), db);
    std::vector<std::pair<std::size_t, std::size_t>> keyed;
    for (std::size_t j = 0; j < s.size(); ++j) keyed.emplace_back(naive_distance(q, s[j]), j);
    std::sort(keyed.begin(), keyed.end());
    REQUIRE(r.order.size() == 300);
    for (std::size_t k = 0; k < 300; ++k) {
      CHECK(r.order[k] == keyed[k].second);
      CHECK(r.distances[k] == keyed[k].first);
    }
    CHECK(std::is_sorted(r.distances.begin(), r.distances.end()));
  }
}

TEST_CASE("average precision") {
  const bool flags[] = {true, false, true};
  CHECK(average_precision(flags, 3, 2) == doctest::Approx(0.8333333333333334).epsilon(1e-15));
  const bool none[] = {false, false};
  CHECK(average_precision(none, 2, 0) == 0.0);
  const bool all[] = {true, true, true, true};
  CHECK(average_precision(all, 4, 4) == 1.0);
  // Normalized by min(R, relevant): R = 2 with 4 relevant items, both top hits found.
  CHECK(average_precision(all, 2, 4) == 1.0);
}

TEST_CASE("map_at_r") {
  SUBCASE("hand example") {
    // Query 0000; items at distances 0, 1, 2 with labels 7, 3, 7.
    const auto q = make_db({{1, 1, 1, 1}}, {7});
    const auto db = make_db({{1, 1, 1, 1}, {-1, 1, 1, 1}, {-1, -1, 1, 1}}, {7, 3, 7});
    CHECK(map_at_r(q, db, 3) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  }
  SUBCASE("every item relevant") {
    const auto s = random_signs(10, 16, 5);
    const auto db = make_db(s, std::vector<int>(10, 1));
    const auto q = make_db(random_signs(4, 16, 6), std::vector<int>(4, 1));
    CHECK(map_at_r(q, db) == 1.0);
  }
  SUBCASE("no relevant items contributes zero") {
    const auto db = make_db(random_signs(5, 8, 7), std::vector<int>(5, 0));
    const auto q = make_db(random_signs(2, 8, 8), {0, 9});
    CHECK(map_at_r(q, db) == 0.5);
  }
  SUBCASE("self-exclusion only for the same object") {
    const auto s = random_signs(40, 16, 9);
    std::vector<int> labels(40);
    for (std::size_t i = 0; i < 40; ++i) labels[i] = static_cast<int>(i % 5);
    const auto db = make_db(s, labels);
    const auto copy = db;
    CHECK(std::abs(map_at_r(db, db, 10) - naive_map(s, labels, s, labels, 10, true)) <= 1e-12);
    CHECK(std::abs(map_at_r(copy, db, 10) - naive_map(s, labels, s, labels, 10, false)) <= 1e-12);
  }
  SUBCASE("random instances match brute force for several R and K") {
    for (std::size_t k : {16u, 64u, 96u}) {
      const auto qs = random_signs(25, k, 10 + k), ds = random_signs(200, k, 20 + k);
      std::vector<int> ql(25), dl(200);
      std::mt19937 rng(static_cast<unsigned>(k));
      for (auto& v : ql) v = static_cast<int>(rng() % 6);
      for (auto& v : dl) v = static_cast<int>(rng() % 6);
      const auto q = make_db(qs, ql), db = make_db(ds, dl);
      for (std::size_t r : {0u, 1u, 10u, 200u})
        CHECK(std::abs(map_at_r(q, db, r) - naive_map(qs, ql, ds, dl, r, false)) <= 1e-12);
    }
  }
  SUBCASE("errors") {
    const auto db = make_db(random_signs(3, 8, 11), {0, 1, 2});
    CHECK_THROWS_AS(map_at_r(db, CodeDatabase{}), DataError);
    CHECK_THROWS_AS(map_at_r(db, db, 4), DimensionError);
    const auto other = make_db(random_signs(3, 16, 12), {0, 1, 2});
    CHECK_THROWS_AS(map_at_r(db, other), DimensionError);
  }
}

TEST_CASE("ranking threads do not change the result") {
  const auto qs = random_signs(60, 64, 30), ds = random_signs(500, 64, 31);
  std::vector<int> ql(60), dl(500);
  for (std::size_t i = 0; i < 60; ++i) ql[i] = static_cast<int>(i % 7);
  for (std::size_t i = 0; i < 500; ++i) dl[i] = static_cast<int>((i * 3) % 7);
  const auto q = make_db(qs, ql), db = make_db(ds, dl);
  double one, four;
  {
    EnvGuard g("1");
    CHECK(ranking_threads() == 1);
    one = map_at_r(q, db, 50);
  }
  {
    EnvGuard g("4");
    CHECK(ranking_threads() == 4);
    four = map_at_r(q, db, 50);
  }
  CHECK(one == four);
  CHECK(ranking_threads() >= 1);
}

TEST_CASE("family_map") {
  const auto s = random_signs(30, 32, 40);
  std::vector<int> labels(30), family(30), two(30);
  for (std::size_t i = 0; i < 30; ++i) {
    labels[i] = static_cast<int>(i % 6);
    family[i] = labels[i];
    two[i] = labels[i] < 3 ? 0 : 1;
  }
  const auto db = make_db(s, labels, family);
  CHECK(family_map(db, db) == map_at_r(db, db));
  const auto same = make_db(s, labels, std::vector<int>(30, 4));
  CHECK(family_map(same, same) == 1.0);
  const auto fam = make_db(s, labels, two);
  CHECK(std::abs(family_map(fam, fam, 5) - naive_map(s, two, s, two, 5, true)) <= 1e-12);
  CHECK_THROWS_AS(family_map(make_db(s, labels), make_db(s, labels)), DataError);
}

TEST_CASE("code database file") {
  const auto dir = testutil::scratch_dir("retrieval_db");
  const auto db = make_db(random_signs(17, 130, 50), std::vector<int>(17, 3), std::vector<int>(17, 1));
  write_code_database(dir / "db.bin", db);
  const auto back = read_code_database(dir / "db.bin");
  CHECK(back.bits == 130);
  CHECK(back.codes == db.codes);
  CHECK(back.labels == db.labels);
  CHECK(back.family_labels == db.family_labels);

  {
    std::ofstream out(dir / "db.bin", std::ios::binary | std::ios::app);
    out.put('x');
  }
  CHECK_THROWS_AS(read_code_database(dir / "db.bin"), DataError);

  CodeDatabase bad = db;
  bad.labels.pop_back();
  CHECK_THROWS_AS(bad.validate(), DimensionError);
}

TEST_CASE("attention correlation") {
  SUBCASE("identical maps give all ones") {
    const Tensor a = Tensor::from({1, 3, 2}, {0.3, 0.7, 0.3, 0.7, 0.3, 0.7});
    for (double v : attention_correlation(a)) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("disjoint support gives the identity") {
    const Tensor a = Tensor::from({1, 2, 4}, {0.5, 0.5, 0, 0, 0, 0, 0.1, 0.9});
    const auto c = attention_correlation(a);
    const std::vector<double> eye{1, 0, 0, 1};
    for (std::size_t i = 0; i < 4; ++i) CHECK(c[i] == doctest::Approx(eye[i]).epsilon(1e-15));
    CHECK(mean_off_diagonal(c, 2) == 0.0);
  }
  SUBCASE("random maps match the double loop") {
    const std::size_t b = 3, m = 4, hw = 6;
    const auto v = testutil::random_values(b * m * hw, 60, 0.0, 1.0);
    const auto c = attention_correlation(Tensor::from({b, m, hw}, v));
    double off = 0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double want = 0;
        for (std::size_t n = 0; n < b; ++n) {
          double ab = 0, aa = 0, bb = 0;
          for (std::size_t p = 0; p < hw; ++p) {
            const double x = v[(n * m + i) * hw + p], y = v[(n * m + j) * hw + p];
            ab += x * y;
            aa += x * x;
            bb += y * y;
          }
          want += ab / std::sqrt(aa * bb);
        }
        want /= static_cast<double>(b);
        CHECK(c[i * m + j] == doctest::Approx(want).epsilon(1e-13));
        CHECK(c[i * m + j] == c[j * m + i]);
        CHECK(c[i * m + j] >= 0.0);
        CHECK(c[i * m + j] <= 1.0 + 1e-15);
        if (i != j) off += want;
      }
    CHECK(mean_off_diagonal(c, m) == doctest::Approx(off / 12.0).epsilon(1e-13));
  }
}

TEST_CASE("localization error") {
  SUBCASE("patch centers") {
    CHECK(patch_center(0, 32, 8) == Landmark{3.5, 3.5});
    CHECK(patch_center(5, 32, 8) == Landmark{11.5, 11.5});
    CHECK(patch_center(0, 32, 32) == Landmark{15.5, 15.5});
  }
  SUBCASE("peak on the landmark patch is within half a patch diagonal") {
    // 4 x 4 grid of 8-pixel patches, concept peaks at patch 6 (row 1, col 2).
    // Landmarks are pixel coordinates inside that patch.
    std::vector<double> attn(16, 0.01);
    attn[6] = 0.9;
    for (double lx : {16.0, 19.5, 23.0})
      for (double ly : {8.0, 11.0, 15.0}) {
        const Landmark lm{lx, ly};
        const double err = localization_error(attn, 1, std::span(&lm, 1), 32, 8);
        CHECK(err <= std::sqrt(2.0) * 4.0 / 32.0 * 100.0);
      }
  }
  SUBCASE("known geometry with min over concepts") {
    // Concept 0 peaks at patch 0 -> (3.5, 3.5); concept 1 at patch 15 -> (27.5, 27.5).
    std::vector<double> attn(32, 0.0);
    attn[0] = 1.0;
    attn[16 + 15] = 1.0;
    const std::vector<Landmark> lms{{3.5, 7.5}, {30.5, 23.5}};
    const double want = (4.0 + 5.0) / 2.0 / 32.0 * 100.0;
    CHECK(localization_error(attn, 2, lms, 32, 8) == doctest::Approx(want).epsilon(1e-14));
  }
  SUBCASE("single patch predicts the image center") {
    const std::vector<double> attn{1.0};
    const Landmark lm{15.5, 18.5};
    CHECK(localization_error(attn, 1, std::span(&lm, 1), 32, 32) == doctest::Approx(3.0 / 32.0 * 100.0));
  }
  const std::vector<double> attn(16, 1.0);
  CHECK_THROWS_AS(localization_error(attn, 1, {}, 32, 8), DataError);
  CHECK_THROWS_AS(localization_error(attn, 3, std::vector<Landmark>{{1, 1}}, 32, 8), DimensionError);
}
