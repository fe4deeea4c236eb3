#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "shmm/eval.hpp"

using namespace shmm;

namespace {
std::vector<std::string> seq(const std::string& chars) {
  std::vector<std::string> out;
  for (char c : chars) out.emplace_back(1, c);
  return out;
}
}  // namespace

TEST_CASE("levenshtein basics") {
  REQUIRE(levenshtein(std::string("abc"), std::string("abc")) == 0);
  REQUIRE(levenshtein(std::string(""), std::string("abc")) == 3);
  REQUIRE(levenshtein(std::string("kitten"), std::string("sitting")) == 3);
  REQUIRE(levenshtein(seq("kitten"), seq("sitting")) == 3);
}

TEST_CASE("levenshtein is a metric") {
  std::mt19937_64 rng(21);
  auto random_seq = [&] {
    std::string s;
    size_t n = rng() % 8;
    for (size_t i = 0; i < n; ++i) s.push_back('a' + rng() % 3);
    return s;
  };
  for (int trial = 0; trial < 200; ++trial) {
    std::string a = random_seq(), b = random_seq(), c = random_seq();
    int dab = levenshtein(a, b);
    REQUIRE(dab == levenshtein(b, a));
    REQUIRE((dab == 0) == (a == b));
    REQUIRE(dab <= levenshtein(a, c) + levenshtein(c, b));
  }
}

TEST_CASE("cer") {
  REQUIRE(cer("abcd", "abcd") == 0.0);
  REQUIRE(cer("", "abcd") == 1.0);
  REQUIRE(cer("abcd", "abcf") == 0.25);
  REQUIRE_THROWS_AS(cer("x", ""), Error);
}

TEST_CASE("bitrate of uniform and constant streams") {
  // 100 symbols over 4 equally frequent values in 10 seconds: 20 bits/sec.
  std::vector<SymbolSequence> seqs;
  SymbolSequence s;
  s.id = "u1";
  s.duration_sec = 10.0;
  for (int i = 0; i < 100; ++i) s.symbols.push_back("s" + std::to_string(i % 4));
  seqs.push_back(s);
  REQUIRE(bitrate(seqs) == Catch::Approx(20.0).epsilon(1e-12));

  std::vector<SymbolSequence> constant{{"u1", std::vector<std::string>(50, "a"), 5.0}};
  REQUIRE(bitrate(constant) == 0.0);
  std::vector<SymbolSequence> single{{"u1", {"a"}, 1.0}};
  REQUIRE(bitrate(single) == 0.0);

  std::vector<SymbolSequence> empty_dur{{"u1", {"a"}, 0.0}};
  REQUIRE_THROWS_AS(bitrate(empty_dur), Error);
}

TEST_CASE("bitrate bound and renaming invariance") {
  std::mt19937_64 rng(4);
  std::vector<SymbolSequence> seqs;
  double total_dur = 0.0;
  long n = 0;
  for (int u = 0; u < 5; ++u) {
    SymbolSequence s;
    s.id = "u" + std::to_string(u);
    s.duration_sec = 1.0 + (rng() % 10);
    total_dur += s.duration_sec;
    size_t len = 1 + rng() % 30;
    for (size_t i = 0; i < len; ++i) s.symbols.push_back("s" + std::to_string(rng() % 6));
    n += static_cast<long>(len);
    seqs.push_back(s);
  }
  double b = bitrate(seqs);
  REQUIRE(b >= 0.0);
  REQUIRE(b <= n * std::log2(6.0) / total_dur + 1e-12);

  auto renamed = seqs;
  for (auto& s : renamed)
    for (auto& sym : s.symbols) sym = "x" + sym;
  REQUIRE(bitrate(renamed) == b);
}

namespace {
// Independent brute-force triple enumeration.
double abx_oracle(const std::vector<AbxItem>& items,
                  const std::function<double(const AbxItem&, const AbxItem&)>& d) {
  std::map<std::string, std::vector<size_t>> cats;
  for (size_t i = 0; i < items.size(); ++i) cats[items[i].category].push_back(i);
  double sum = 0.0;
  int pairs = 0;
  for (const auto& [ca, ia] : cats)
    for (const auto& [cb, ib] : cats) {
      if (ca == cb || ia.size() < 2 || ib.empty()) continue;
      double e = 0.0;
      long cnt = 0;
      for (size_t x : ia)
        for (size_t a : ia) {
          if (a == x) continue;
          for (size_t b : ib) {
            double dax = d(items[a], items[x]);
            double dbx = d(items[b], items[x]);
            e += dax > dbx ? 1.0 : (dax == dbx ? 0.5 : 0.0);
            ++cnt;
          }
        }
      sum += e / cnt;
      ++pairs;
    }
  return sum / pairs;
}
}  // namespace

TEST_CASE("abx degenerate cases") {
  auto lev = [](const AbxItem& a, const AbxItem& b) {
    return static_cast<double>(levenshtein(a.symbols.symbols, b.symbols.symbols));
  };
  std::vector<AbxItem> items;
  for (int i = 0; i < 3; ++i)
    items.push_back({"a" + std::to_string(i), "A", {"", seq("aaaa"), 1.0}, {}});
  for (int i = 0; i < 3; ++i)
    items.push_back({"b" + std::to_string(i), "B", {"", seq("bbbb"), 1.0}, {}});
  // Same-category pairs always strictly closer.
  REQUIRE(abx_error(items, lev) == 0.0);

  // All distances identical: every comparison ties.
  auto constant = [](const AbxItem&, const AbxItem&) { return 1.0; };
  REQUIRE(abx_error(items, constant) == 0.5);

  std::vector<AbxItem> too_few{{"x", "A", {"", seq("a"), 1.0}, {}}};
  REQUIRE_THROWS_AS(abx_error(too_few, lev), Error);
}

TEST_CASE("abx equals brute-force enumeration on random item sets") {
  std::mt19937_64 rng(77);
  auto lev = [](const AbxItem& a, const AbxItem& b) {
    return static_cast<double>(levenshtein(a.symbols.symbols, b.symbols.symbols));
  };
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<AbxItem> items;
    int ncat = 2 + static_cast<int>(rng() % 2);
    for (int c = 0; c < ncat; ++c) {
      int n = 2 + static_cast<int>(rng() % 3);
      for (int i = 0; i < n; ++i) {
        std::string payload;
        size_t len = 1 + rng() % 5;
        for (size_t k = 0; k < len; ++k) payload.push_back('a' + rng() % 3);
        items.push_back({"i", std::string(1, 'A' + c), {"", seq(payload), 1.0}, {}});
      }
    }
    REQUIRE(abx_error(items, lev) == Catch::Approx(abx_oracle(items, lev)).epsilon(1e-12));
  }
}

TEST_CASE("abx invariant under strictly monotone distance transforms") {
  std::mt19937_64 rng(31);
  auto lev = [](const AbxItem& a, const AbxItem& b) {
    return static_cast<double>(levenshtein(a.symbols.symbols, b.symbols.symbols));
  };
  auto lev_exp = [&](const AbxItem& a, const AbxItem& b) {
    return std::exp(lev(a, b)) - 0.5;
  };
  std::vector<AbxItem> items;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 3; ++i) {
      std::string payload;
      for (int k = 0; k < 4; ++k) payload.push_back('a' + rng() % 4);
      items.push_back({"i", std::string(1, 'A' + c), {"", seq(payload), 1.0}, {}});
    }
  REQUIRE(abx_error(items, lev) == abx_error(items, lev_exp));
}

TEST_CASE("dtw_kl basics") {
  MatrixXd a(3, 2);
  a << 0.9, 0.1, 0.5, 0.5, 0.2, 0.8;
  REQUIRE(dtw_kl(a, a) == 0.0);

  MatrixXd p(1, 2), q(1, 2);
  p << 1.0, 0.0;
  q << 0.5, 0.5;
  REQUIRE(dtw_kl(p, q) == Catch::Approx(std::log(2.0)).margin(1e-9));

  // Frame-doubled copy is absorbed by the warping.
  MatrixXd doubled(6, 2);
  for (int t = 0; t < 3; ++t) {
    doubled.row(2 * t) = a.row(t);
    doubled.row(2 * t + 1) = a.row(t);
  }
  REQUIRE(dtw_kl(a, doubled) == Catch::Approx(0.0).margin(1e-12));

  MatrixXd bad(1, 3);
  bad << 0.5, 0.5, 0.5;
  REQUIRE_THROWS_AS(dtw_kl(a, bad), Error);  // column mismatch and non-distribution
  REQUIRE_THROWS_AS(dtw_kl(p, MatrixXd::Constant(1, 2, 0.9)), Error);
}

TEST_CASE("dtw_kl is non-negative") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> ud(0.01, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    auto random_pg = [&](int t) {
      MatrixXd m(t, 3);
      for (int i = 0; i < t; ++i) {
        for (int c = 0; c < 3; ++c) m(i, c) = ud(rng);
        m.row(i) /= m.row(i).sum();
      }
      return m;
    };
    MatrixXd a = random_pg(1 + rng() % 6), b = random_pg(1 + rng() % 6);
    REQUIRE(dtw_kl(a, b) >= 0.0);
  }
}

TEST_CASE("nmi") {
  std::vector<int> a{0, 0, 1, 1, 2, 2};
  REQUIRE(nmi(a, a) == Catch::Approx(1.0).margin(1e-12));
  std::vector<int> renamed{5, 5, 9, 9, 7, 7};
  REQUIRE(nmi(a, renamed) == Catch::Approx(1.0).margin(1e-12));
  std::vector<int> constant(6, 3);
  REQUIRE(nmi(a, constant) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE_THROWS_AS(nmi(a, std::vector<int>{1, 2}), Error);
}
