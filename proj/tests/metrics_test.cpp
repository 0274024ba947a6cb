#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "stereo/metrics.hpp"
#include "stereo/rng.hpp"
#include "support.hpp"

using namespace stereo;

namespace {

// Naive double-loop reference for every statistic.
struct OracleReport {
  double avg = 0, bad05 = 0, bad1 = 0, bad2 = 0, rms = 0, a95 = 0, d1 = 0;
};

OracleReport oracle_evaluate(const Image& pred, const Image& gt, const Image& mask) {
  std::vector<double> errs;
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x) {
      if (mask.at(0, y, x) <= 0.5f) continue;
      errs.push_back(std::abs(static_cast<double>(pred.at(0, y, x)) - gt.at(0, y, x)));
    }
  OracleReport r;
  const double n = static_cast<double>(errs.size());
  for (double e : errs) {
    r.avg += e / n;
    r.rms += e * e / n;
  }
  r.rms = std::sqrt(r.rms);
  int64_t b05 = 0, b1 = 0, b2 = 0, d1 = 0;
  size_t i = 0;
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x) {
      if (mask.at(0, y, x) <= 0.5f) continue;
      const double e = errs[i++];
      if (e > 0.5) ++b05;
      if (e > 1.0) ++b1;
      if (e > 2.0) ++b2;
      if (e > 3.0 && e > 0.05 * std::abs(gt.at(0, y, x))) ++d1;
    }
  r.bad05 = 100.0 * b05 / n;
  r.bad1 = 100.0 * b1 / n;
  r.bad2 = 100.0 * b2 / n;
  r.d1 = 100.0 * d1 / n;
  std::sort(errs.begin(), errs.end());
  const double pos = 0.95 * (n - 1);
  const auto lo = static_cast<size_t>(std::floor(pos));
  const double w = pos - static_cast<double>(lo);
  r.a95 = errs.size() == 1
              ? errs[0]
              : errs[lo] * (1 - w) + errs[std::min(lo + 1, errs.size() - 1)] * w;
  return r;
}

double oracle_mxiou(const Image& disp, const Image& fg) {
  // Candidate thresholds: every unique value plus one below the minimum.
  std::vector<float> values(disp.pix.begin(), disp.pix.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> candidates(values.begin(), values.end());
  candidates.push_back(static_cast<double>(values.front()) - 1.0);
  double best = -1;
  for (double t : candidates) {
    int64_t inter = 0, m = 0, f = 0;
    for (int64_t i = 0; i < disp.size(); ++i) {
      const bool in_m = disp.pix[static_cast<size_t>(i)] > t;
      const bool in_f = fg.pix[static_cast<size_t>(i)] > 0.5f;
      if (in_m) ++m;
      if (in_f) ++f;
      if (in_m && in_f) ++inter;
    }
    const int64_t uni = m + f - inter;
    best = std::max(best, uni == 0 ? 0.0 : static_cast<double>(inter) / uni);
  }
  return best;
}

Image oracle_band(const Image& fg, int p) {
  Image band(1, fg.height, fg.width);
  for (int y = 0; y < fg.height; ++y)
    for (int x = 0; x < fg.width; ++x) {
      // Chebyshev distance to the nearest opposite-class pixel.
      bool near_fg = false, near_bg = false;
      for (int dy = -p; dy <= p; ++dy)
        for (int dx = -p; dx <= p; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= fg.height || xx < 0 || xx >= fg.width) continue;
          if (fg.at(0, yy, xx) > 0.5f)
            near_fg = true;
          else
            near_bg = true;
        }
      band.at(0, y, x) = (near_fg && near_bg) ? 1.0f : 0.0f;
    }
  return band;
}

}  // namespace

TEST_CASE("perfect prediction scores zero everywhere") {
  Rng rng(1);
  Image gt(1, 8, 8);
  for (auto& v : gt.pix) v = static_cast<float>(rng.uniform(0, 20));
  Image mask(1, 8, 8, 1.0f);
  const EvalReport r = evaluate(gt, gt, mask);
  CHECK(r.avg_err == 0);
  CHECK(r.bad_0_5 == 0);
  CHECK(r.bad_1 == 0);
  CHECK(r.bad_2 == 0);
  CHECK(r.rms == 0);
  CHECK(r.a95 == 0);
  CHECK(r.d1_all == 0);
  CHECK(r.pixel_count == 64);
}

TEST_CASE("constant offset of 3 px") {
  Image gt(1, 6, 6, 100.0f);
  Image pred = gt;
  for (auto& v : pred.pix) v += 3.0f;
  Image mask(1, 6, 6, 1.0f);
  const EvalReport r = evaluate(pred, gt, mask);
  CHECK(r.avg_err == doctest::Approx(3.0));
  CHECK(r.rms == doctest::Approx(3.0));
  CHECK(r.a95 == doctest::Approx(3.0));
  CHECK(r.bad_2 == doctest::Approx(100.0));
  CHECK(r.bad_1 == doctest::Approx(100.0));
  CHECK(r.d1_all == doctest::Approx(0.0));  // 3 px is not > 3 px, and not > 5% of 100
}

TEST_CASE("metrics match the double-loop oracle on random fields") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Image pred(1, 16, 16), gt(1, 16, 16), mask(1, 16, 16);
    for (auto& v : pred.pix) v = static_cast<float>(rng.uniform(-5, 40));
    for (auto& v : gt.pix) v = static_cast<float>(rng.uniform(-5, 40));
    for (auto& v : mask.pix) v = rng.bernoulli(0.8) ? 1.0f : 0.0f;
    mask.pix[0] = 1.0f;
    const EvalReport r = evaluate(pred, gt, mask);
    const OracleReport o = oracle_evaluate(pred, gt, mask);
    CHECK(r.avg_err == doctest::Approx(o.avg).epsilon(1e-9));
    CHECK(r.rms == doctest::Approx(o.rms).epsilon(1e-9));
    CHECK(r.a95 == doctest::Approx(o.a95).epsilon(1e-9));
    CHECK(r.bad_0_5 == doctest::Approx(o.bad05).epsilon(1e-9));
    CHECK(r.bad_1 == doctest::Approx(o.bad1).epsilon(1e-9));
    CHECK(r.bad_2 == doctest::Approx(o.bad2).epsilon(1e-9));
    CHECK(r.d1_all == doctest::Approx(o.d1).epsilon(1e-9));
  }
}

TEST_CASE("empty mask is an input error") {
  Image a(1, 4, 4), mask(1, 4, 4, 0.0f);
  CHECK_THROWS_AS(evaluate(a, a, mask), InputError);
}

TEST_CASE("bad-p monotonicity and scaling properties") {
  Rng rng(7);
  Image pred(1, 12, 12), gt(1, 12, 12), mask(1, 12, 12, 1.0f);
  for (auto& v : pred.pix) v = static_cast<float>(rng.uniform(0, 10));
  for (auto& v : gt.pix) v = static_cast<float>(rng.uniform(0, 10));
  const EvalReport r = evaluate(pred, gt, mask);
  CHECK(r.bad_0_5 >= r.bad_1);
  CHECK(r.bad_1 >= r.bad_2);
  CHECK(r.rms >= r.avg_err);  // power-mean inequality
  CHECK(r.a95 >= 0);

  // Scaling errors by k scales the magnitude metrics by k.
  Image pred2 = gt;
  for (int64_t i = 0; i < pred2.size(); ++i)
    pred2.pix[static_cast<size_t>(i)] +=
        2.0f * (pred.pix[static_cast<size_t>(i)] - gt.pix[static_cast<size_t>(i)]);
  Image pred1 = gt;
  for (int64_t i = 0; i < pred1.size(); ++i)
    pred1.pix[static_cast<size_t>(i)] +=
        (pred.pix[static_cast<size_t>(i)] - gt.pix[static_cast<size_t>(i)]);
  const EvalReport r1 = evaluate(pred1, gt, mask);
  const EvalReport r2 = evaluate(pred2, gt, mask);
  CHECK(r2.avg_err == doctest::Approx(2 * r1.avg_err).epsilon(1e-5));
  CHECK(r2.rms == doctest::Approx(2 * r1.rms).epsilon(1e-5));
  CHECK(r2.a95 == doctest::Approx(2 * r1.a95).epsilon(1e-5));
  // bad_p at threshold 1 equals bad_{p/2} of the unscaled field.
  CHECK(r2.bad_1 == doctest::Approx(r1.bad_0_5).epsilon(1e-9));
}

TEST_CASE("metrics are permutation invariant") {
  Rng rng(8);
  Image pred(1, 1, 64), gt(1, 1, 64), mask(1, 1, 64, 1.0f);
  for (auto& v : pred.pix) v = static_cast<float>(rng.uniform(0, 9));
  for (auto& v : gt.pix) v = static_cast<float>(rng.uniform(0, 9));
  const EvalReport r = evaluate(pred, gt, mask);
  // Reverse both fields.
  Image rp = pred, rg = gt;
  std::reverse(rp.pix.begin(), rp.pix.end());
  std::reverse(rg.pix.begin(), rg.pix.end());
  const EvalReport rr = evaluate(rp, rg, mask);
  CHECK(r.avg_err == doctest::Approx(rr.avg_err).epsilon(1e-12));
  CHECK(r.a95 == doctest::Approx(rr.a95).epsilon(1e-12));
  CHECK(r.rms == doctest::Approx(rr.rms).epsilon(1e-12));
}

TEST_CASE("aggregate is the pixel-weighted mean") {
  Rng rng(9);
  std::vector<EvalReport> reports;
  double weighted = 0;
  int64_t pixels = 0;
  for (int i = 0; i < 3; ++i) {
    const int w = 4 + 4 * i;
    Image pred(1, 4, w), gt(1, 4, w), mask(1, 4, w, 1.0f);
    for (auto& v : pred.pix) v = static_cast<float>(rng.uniform(0, 10));
    for (auto& v : gt.pix) v = static_cast<float>(rng.uniform(0, 10));
    reports.push_back(evaluate(pred, gt, mask));
    weighted += reports.back().avg_err * reports.back().pixel_count;
    pixels += reports.back().pixel_count;
  }
  const EvalReport agg = aggregate_reports(reports);
  CHECK(agg.avg_err == doctest::Approx(weighted / pixels).epsilon(1e-12));
  CHECK(agg.pixel_count == pixels);
}

TEST_CASE("mxiou separates a clean foreground") {
  Image disp(1, 8, 8, 0.0f), fg(1, 8, 8, 0.0f);
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) {
      disp.at(0, y, x) = 10.0f;
      fg.at(0, y, x) = 1.0f;
    }
  const auto [iou, t] = mxiou(disp, fg);
  CHECK(iou == doctest::Approx(1.0));
  CHECK(t >= 0.0);
  CHECK(t < 10.0);
}

TEST_CASE("mxiou of a constant disparity is the foreground fraction") {
  Image disp(1, 4, 4, 5.0f), fg(1, 4, 4, 0.0f);
  fg.at(0, 0, 0) = fg.at(0, 1, 1) = 1.0f;
  const auto [iou, t] = mxiou(disp, fg);
  CHECK(iou == doctest::Approx(2.0 / 16.0));
  CHECK(t < 5.0);  // the all-pixels threshold wins
}

TEST_CASE("mxiou equals the exhaustive sweep and is monotone-invariant") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Image disp(1, 8, 8), fg(1, 8, 8);
    for (auto& v : disp.pix) v = static_cast<float>(rng.uniform_int(0, 6));
    bool any = false, all = true;
    for (auto& v : fg.pix) {
      v = rng.bernoulli(0.4) ? 1.0f : 0.0f;
      any = any || v > 0.5f;
      all = all && v > 0.5f;
    }
    if (!any) fg.pix[0] = 1.0f;
    if (all) fg.pix[0] = 0.0f;
    const auto [iou, t] = mxiou(disp, fg);
    CHECK(iou == doctest::Approx(oracle_mxiou(disp, fg)).epsilon(1e-12));

    // Any strictly increasing transform preserves the sweep.
    Image cubed = disp;
    for (auto& v : cubed.pix) v = v * v * v + 2.0f;
    CHECK(mxiou(cubed, fg).first == doctest::Approx(iou).epsilon(1e-12));
  }
}

TEST_CASE("mxiou rejects degenerate masks") {
  Image disp(1, 4, 4, 1.0f);
  Image none(1, 4, 4, 0.0f), full(1, 4, 4, 1.0f);
  CHECK_THROWS_AS(mxiou(disp, none), InputError);
  CHECK_THROWS_AS(mxiou(disp, full), InputError);
}

TEST_CASE("boundary band matches the brute-force distance test") {
  for (uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(100 + seed);
    Image fg(1, 16, 16);
    for (auto& v : fg.pix) v = rng.bernoulli(0.5) ? 1.0f : 0.0f;
    for (int p : {1, 2, 4}) {
      const Image band = boundary_band(fg, p);
      const Image want = oracle_band(fg, p);
      CHECK(band.pix == want.pix);
    }
  }
}

TEST_CASE("mxioubd is perfect for a step aligned with the boundary") {
  Image disp(1, 10, 10, 1.0f), fg(1, 10, 10, 0.0f);
  for (int y = 0; y < 10; ++y)
    for (int x = 5; x < 10; ++x) {
      disp.at(0, y, x) = 8.0f;
      fg.at(0, y, x) = 1.0f;
    }
  CHECK(mxioubd(disp, fg, 4) == doctest::Approx(1.0));
  CHECK_THROWS_AS(mxioubd(disp, fg, 0), InputError);
}
