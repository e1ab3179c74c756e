#include <doctest.h>

#include <filesystem>
#include <random>

#include "phantasmagoria/png_io.hpp"
#include "phantasmagoria/stimulus.hpp"

using namespace phantasmagoria;

namespace {

Image random_image(int h, int w, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w, c);
  for (double& v : img.data()) v = u(rng);
  return img;
}

bool in_unit_range(const Image& img) {
  for (double v : img.data())
    if (!(v >= 0.0 && v <= 1.0)) return false;
  return true;
}

std::vector<TargetSpec> all_shapes() {
  return {TargetSpec::square({0.5}), TargetSpec::ring({0.35}), TargetSpec::bar({0.65}),
          TargetSpec::grating(0.5, 0, 0.4), TargetSpec::grating(0.5, 45, 0.4), TargetSpec::grating(0.5, 90, 0.4)};
}

}  // namespace

TEST_SUITE("stimulus") {
  TEST_CASE("constant inducer with matching squares") {
    const auto spec = TargetSpec::square({0.5});
    const Stimulus s = composite(Image(128, 128, 1, 0.5), spec, default_placement(spec));
    for (double v : s.image.data()) CHECK(v == 0.5);
    CHECK(s.left_mask.count() == 28u * 28u);
    CHECK(s.central_left.count() == 14u * 14u);
  }

  TEST_CASE("target pixels overwrite the inducer bit-exactly") {
    for (const auto& spec : all_shapes()) {
      const Image inducer = random_image(128, 128, 1, 42);
      const Stimulus s = composite(inducer, spec, default_placement(spec));
      const TargetPatch patch = make_target(spec);
      const auto place = default_placement(spec);
      for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x) {
          if (s.left_mask.at(y, x)) {
            REQUIRE(s.right_mask.at(y, x + s.offset));
            CHECK(s.image.at(y, x) == s.image.at(y, x + s.offset));
            CHECK(s.image.at(y, x) == patch.pixels.at(y - place.left.y, x - place.left.x));
          } else if (!s.right_mask.at(y, x)) {
            CHECK(s.image.at(y, x) == inducer.at(y, x));
          }
        }
      CHECK(in_unit_range(s.image));
      CHECK(s.left_mask.disjoint(s.right_mask));
      CHECK(s.central_left.shifted(s.offset) == s.central_right);
    }
  }

  TEST_CASE("ring hole exposes the inducer") {
    const auto spec = TargetSpec::ring({0.35});
    const Image inducer = random_image(128, 128, 1, 3);
    const Stimulus s = composite(inducer, spec, default_placement(spec));
    const auto place = default_placement(spec);
    const int cy = place.left.y + 14, cx = place.left.x + 14;
    CHECK_FALSE(s.left_mask.at(cy, cx));
    CHECK(s.image.at(cy, cx) == inducer.at(cy, cx));
  }

  TEST_CASE("default geometry") {
    const auto p = default_placement(TargetSpec::square({0.5}));
    CHECK(p.left.x + 14 == 34);
    CHECK(p.right.x + 14 == 94);
    CHECK(p.left.y + 14 == 64);
    const auto b = default_placement(TargetSpec::bar({0.5}));
    CHECK(b.left.y >= 6);
    CHECK(b.left.y + 80 <= 122);
  }

  TEST_CASE("zero-contrast grating is a constant patch") {
    const TargetPatch p = make_target(TargetSpec::grating(0.4, 45, 0.0));
    for (int y = 0; y < p.pixels.height(); ++y)
      for (int x = 0; x < p.pixels.width(); ++x)
        if (p.coverage.at(y, x)) CHECK(p.pixels.at(y, x) == 0.4);
  }

  TEST_CASE("canonical contrast stimulus") {
    const Stimulus s = canonical_contrast_stimulus(0.5);
    double lt = 0, rt = 0, lb = 0, rb = 0;
    std::size_t nlb = 0, nrb = 0;
    for (int y = 0; y < 128; ++y)
      for (int x = 0; x < 128; ++x) {
        const double v = s.image.at(y, x);
        if (s.left_mask.at(y, x)) lt += v;
        else if (s.right_mask.at(y, x)) rt += v;
        else if (x < 64) lb += v, ++nlb;
        else rb += v, ++nrb;
      }
    CHECK(lt / s.left_mask.count() == 0.5);
    CHECK(rt / s.right_mask.count() == 0.5);
    CHECK(lb / nlb == 1.0);
    CHECK(rb / nrb == 0.0);
    CHECK_THROWS_AS(canonical_contrast_stimulus(0.0), std::invalid_argument);
  }

  TEST_CASE("mirror swaps the targets") {
    const auto spec = TargetSpec::square({0.5});
    const Stimulus s = composite(random_image(128, 128, 1, 8), spec, default_placement(spec));
    const Stimulus m = mirror(s);
    CHECK(m.left_mask == mirror_horizontal(s.right_mask));
    CHECK(m.right_mask == mirror_horizontal(s.left_mask));
    for (int y = 0; y < 128; ++y)
      for (int x = 0; x < 128; ++x) CHECK(m.image.at(y, x) == s.image.at(y, 127 - x));
    CHECK(m.central_left.shifted(m.offset) == m.central_right);
  }

  TEST_CASE("upscale_nearest") {
    Image small(2, 2, 1, std::vector<double>{0.1, 0.2, 0.3, 0.4});
    const Image big = upscale_nearest(small, 2);
    REQUIRE(big.height() == 4);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) CHECK(big.at(y, x) == small.at(y / 2, x / 2));
    CHECK(upscale_nearest(small, 1).data()[3] == 0.4);
    const Image g = random_image(32, 32, 3, 1);
    const Image up = upscale_nearest(g, 4);
    CHECK(up.height() == 128);
    const Image back = subsample(up, 4);
    CHECK(std::equal(back.data().begin(), back.data().end(), g.data().begin()));
    CHECK_THROWS_AS(upscale_nearest(small, 0), std::invalid_argument);
  }

  TEST_CASE("block_sum is the adjoint of upscale_nearest") {
    const Image x = random_image(8, 8, 3, 4);
    const Image y = random_image(32, 32, 3, 5);
    const Image ux = upscale_nearest(x, 4);
    const Image by = block_sum(y, 4);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < ux.size(); ++i) lhs += ux.data()[i] * y.data()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.data()[i] * by.data()[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }

  TEST_CASE("invalid placements are rejected") {
    const auto spec = TargetSpec::square({0.5});
    TargetPlacement p = default_placement(spec);
    p.right.x = 120;
    CHECK_THROWS(composite(Image(128, 128, 1, 0.2), spec, p));
    p = default_placement(spec);
    p.left.y += 1;
    CHECK_THROWS_AS(composite(Image(128, 128, 1, 0.2), spec, p), std::invalid_argument);
    CHECK_THROWS_AS(composite(Image(128, 128, 3, 0.2), spec, default_placement(spec)), std::invalid_argument);
    CHECK_THROWS_AS(TargetSpec::square({1.5}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(TargetSpec::grating(0.5, 30, 0.2).validate(), std::invalid_argument);
  }

  TEST_CASE("clear_target_pixels zeroes both targets only") {
    const auto spec = TargetSpec::square({0.5});
    const Stimulus s = composite(Image(128, 128, 1, 0.2), spec, default_placement(spec));
    Image g(128, 128, 1, 1.0);
    clear_target_pixels(g, s);
    double sum = 0;
    for (double v : g.data()) sum += v;
    CHECK(sum == 128.0 * 128.0 - 2.0 * 28 * 28);
  }
}

TEST_SUITE("png") {
  TEST_CASE("8-bit round trip quantizes by round(v*255)") {
    const Image img = random_image(17, 23, 3, 6);
    const Image back = decode_image(encode_png(img));
    REQUIRE(back.channels() == 3);
    for (std::size_t i = 0; i < img.size(); ++i)
      CHECK(back.data()[i] == std::round(img.data()[i] * 255.0) / 255.0);
    CHECK(quantize_8bit(-0.2) == 0);
    CHECK(quantize_8bit(1.7) == 255);
    CHECK(quantize_8bit(0.5) == 128);
  }

  TEST_CASE("grayscale image and mask files") {
    const auto dir = std::filesystem::temp_directory_path() / "phantasmagoria_png_test";
    std::filesystem::create_directories(dir);
    const Image g = random_image(9, 5, 1, 2);
    write_png(dir / "g.png", g);
    const Image back = read_image(dir / "g.png");
    CHECK(back.channels() == 1);
    CHECK(back.width() == 5);
    Mask m(4, 4);
    m.set(1, 2, true);
    write_png(dir / "m.png", m);
    const Image mb = read_image(dir / "m.png");
    CHECK(mb.at(1, 2) == 1.0);
    CHECK(mb.at(0, 0) == 0.0);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("garbage bytes are rejected") {
    const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5, 6, 7, 8};
    CHECK_THROWS(decode_image(junk));
  }
}
