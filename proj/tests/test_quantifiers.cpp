#include <doctest.h>

#include <cmath>
#include <random>

#include "phantasmagoria/illusion_discriminator.hpp"
#include "phantasmagoria/stimulus.hpp"

using namespace phantasmagoria;

namespace {

constexpr double kExact = 1e-12;

Image random_response(int channels, std::uint64_t seed, double lo = 0.05, double hi = 0.95) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Image r(kStimulusSize, kStimulusSize, channels);
  for (double& v : r.data()) v = u(rng);
  return r;
}

Stimulus gray_square_stimulus() {
  const auto spec = TargetSpec::square({0.5});
  return composite(Image(kStimulusSize, kStimulusSize, 1, 0.3), spec, default_placement(spec));
}

// Oracle: walk both central masks in raster order and pair pixels by rank.
double raster_mean_difference(const Image& r, const Stimulus& s, int c) {
  std::vector<double> left, right;
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x) {
      if (s.central_left.at(y, x)) left.push_back(r.at(y, x, c));
      if (s.central_right.at(y, x)) right.push_back(r.at(y, x, c));
    }
  REQUIRE(left.size() == right.size());
  double acc = 0;
  for (std::size_t i = 0; i < left.size(); ++i) acc += right[i] - left[i];
  return acc / static_cast<double>(left.size());
}

void fill_central(Image& r, const Mask& m, int c, double v) {
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.at(y, x)) r.at(y, x, c) = v;
}

}  // namespace

TEST_SUITE("quantifiers") {
  TEST_CASE("michelson formula cases") {
    CHECK(michelson_contrast({0.8, 0.2}) == doctest::Approx(0.6).epsilon(kExact));
    CHECK(std::abs(michelson_contrast({0.8, 0.2}) - 0.6) < kExact);
    CHECK(michelson_contrast({0.4, 0.4, 0.4}) == 0.0);
    CHECK(std::abs(michelson_contrast({0.0, 0.3, 0.7}) - 1.0) < kExact);
    CHECK_THROWS_AS(michelson_contrast({}), std::invalid_argument);
    CHECK_THROWS_AS(michelson_contrast({0.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(michelson_contrast({-0.1, 0.5}), std::invalid_argument);
  }

  TEST_CASE("michelson is scale invariant and bounded") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> p(20);
      for (double& v : p) v = u(rng);
      const double m = michelson_contrast(p);
      CHECK(m >= 0.0);
      CHECK(m <= 1.0);
      std::vector<double> q = p;
      for (double& v : q) v *= 3.7;
      CHECK(std::abs(michelson_contrast(q) - m) < kExact);
    }
  }

  TEST_CASE("lightness matches the raster oracle") {
    const Stimulus s = gray_square_stimulus();
    const Image r = random_response(1, 11);
    CHECK(std::abs(pq_lightness(r, s, PqSign::right_minus_left) - raster_mean_difference(r, s, 0)) < kExact);
  }

  TEST_CASE("lightness constant offset") {
    const Stimulus s = gray_square_stimulus();
    Image r(kStimulusSize, kStimulusSize, 1, 0.4);
    fill_central(r, s.central_right, 0, 0.5);
    CHECK(std::abs(pq_lightness(r, s, PqSign::right_minus_left) - 0.1) < kExact);
  }

  TEST_CASE("antisymmetry under sign flip") {
    const Stimulus s = gray_square_stimulus();
    const Image r1 = random_response(1, 5), r3 = random_response(3, 6);
    CHECK(pq_lightness(r1, s, PqSign::left_minus_right) == -pq_lightness(r1, s, PqSign::right_minus_left));
    CHECK(pq_michelson(r1, s, PqSign::left_minus_right) == -pq_michelson(r1, s, PqSign::right_minus_left));
    PqConfig c{PqKind::color, PqSign::right_minus_left, {1, -1, 0.5}};
    const double v = pq_color(r3, s, c);
    c.sign = PqSign::left_minus_right;
    CHECK(std::abs(pq_color(r3, s, c) + v) < kExact);
  }

  TEST_CASE("zero under the identity solver") {
    const IdentityVts id;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (const auto& spec : {TargetSpec::square({0.5}), TargetSpec::ring({0.3}), TargetSpec::bar({0.7}),
                             TargetSpec::grating(0.5, 45, 0.6)}) {
      Image inducer(kStimulusSize, kStimulusSize, 1);
      for (double& v : inducer.data()) v = u(rng);
      const Stimulus s = composite(inducer, spec, default_placement(spec));
      for (PqKind k : {PqKind::lightness, PqKind::michelson}) {
        const double pq = score_illusion(id, PqConfig{k, PqSign::right_minus_left, {}}, s, false).pq;
        CHECK(std::abs(pq) < kExact);
      }
    }
    const auto spec = TargetSpec::square({0.2, 0.5, 0.8});
    Image inducer(kStimulusSize, kStimulusSize, 3);
    for (double& v : inducer.data()) v = u(rng);
    const Stimulus s = composite(inducer, spec, default_placement(spec));
    const double pq = score_illusion(id, PqConfig{PqKind::color, PqSign::right_minus_left, {1, 1, -1}}, s, false).pq;
    CHECK(std::abs(pq) < kExact);
  }

  TEST_CASE("colour quantifier cases") {
    const auto spec = TargetSpec::square({0.5, 0.5, 0.5});
    const Stimulus s = composite(Image(kStimulusSize, kStimulusSize, 3, 0.4), spec, default_placement(spec));
    Image r(kStimulusSize, kStimulusSize, 3, 0.4);
    fill_central(r, s.central_right, 0, 0.6);
    CHECK(std::abs(pq_color(r, s, PqConfig{PqKind::color, PqSign::right_minus_left, {1, 0, 0}}) - 0.2) < kExact);

    Image both(kStimulusSize, kStimulusSize, 3, 0.4);
    fill_central(both, s.central_right, 0, 0.5);
    fill_central(both, s.central_right, 1, 0.5);
    CHECK(std::abs(pq_color(both, s, PqConfig{PqKind::color, PqSign::right_minus_left, {1, -1, 0}})) < kExact);

    const Image rr = random_response(3, 21);
    Image first(kStimulusSize, kStimulusSize, 1);
    for (int y = 0; y < kStimulusSize; ++y)
      for (int x = 0; x < kStimulusSize; ++x) first.at(y, x) = rr.at(y, x, 0);
    const double w = 0.7;
    CHECK(std::abs(pq_color(rr, s, PqConfig{PqKind::color, PqSign::right_minus_left, {w, 0, 0}}) -
                   w * pq_lightness(first, s, PqSign::right_minus_left)) < kExact);
    CHECK_THROWS_AS(pq_color(first, s, PqConfig{PqKind::color, PqSign::right_minus_left, {1, 0, 0}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(PqConfig({PqKind::color, PqSign::right_minus_left, {0, 0, 0}}).validate(),
                    std::invalid_argument);
  }

  TEST_CASE("michelson quantifier cases") {
    const Stimulus s = gray_square_stimulus();
    Image r(kStimulusSize, kStimulusSize, 1, 0.5);
    CHECK(pq_michelson(r, s, PqSign::right_minus_left) == 0.0);
    bool hi = true;
    for (int y = 0; y < kStimulusSize; ++y)
      for (int x = 0; x < kStimulusSize; ++x)
        if (s.central_right.at(y, x)) r.at(y, x) = (hi = !hi) ? 0.8 : 0.2;
    CHECK(std::abs(pq_michelson(r, s, PqSign::right_minus_left) - 0.6) < kExact);
    Image dark(kStimulusSize, kStimulusSize, 1, 0.0);
    CHECK_THROWS_AS(pq_michelson(dark, s, PqSign::right_minus_left), std::invalid_argument);
  }

  TEST_CASE("misaligned masks are rejected") {
    Stimulus s = gray_square_stimulus();
    s.central_right = s.central_right.shifted(1);
    CHECK_THROWS_AS(pq_lightness(random_response(1, 2), s, PqSign::right_minus_left), std::invalid_argument);
  }

  TEST_CASE("quantifier gradients match finite differences") {
    const Stimulus s = gray_square_stimulus();
    const Image r = random_response(1, 17, 0.2, 0.8);
    const Image r3 = random_response(3, 18, 0.2, 0.8);
    for (const PqConfig& c : {PqConfig{PqKind::lightness, PqSign::right_minus_left, {}},
                              PqConfig{PqKind::color, PqSign::left_minus_right, {1, -0.5, 0}}}) {
      const Image& base = c.kind == PqKind::color ? r3 : r;
      const PqResult res = evaluate_pq(base, s, c);
      std::mt19937_64 rng(4);
      int checked = 0;
      for (std::size_t i = 0; i < base.size() && checked < 40; ++i) {
        if (res.gradient.data()[i] == 0.0 && (rng() % 50)) continue;
        Image p = base, m = base;
        p.data()[i] += 1e-6;
        m.data()[i] -= 1e-6;
        const double fd = (evaluate_pq(p, s, c).value - evaluate_pq(m, s, c).value) / 2e-6;
        CHECK(std::abs(fd - res.gradient.data()[i]) < 1e-7);
        ++checked;
      }
    }
  }
}
