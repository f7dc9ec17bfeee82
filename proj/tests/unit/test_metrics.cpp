#include <cmath>
#include <sstream>

#include "doctest.h"
#include "fracsynth/error.hpp"
#include "fracsynth/metrics.hpp"
#include "fracsynth/rng.hpp"

using namespace fracsynth;

namespace {

std::vector<std::uint8_t> random_mask(Rng& rng, std::size_t n, double joint_share) {
    std::vector<std::uint8_t> m(n);
    for (auto& v : m) v = rng.uniform() < joint_share ? 0 : 255;
    return m;
}

//! Independent tally: positive class is value 0.
ConfusionCounts brute(const std::vector<std::uint8_t>& p, const std::vector<std::uint8_t>& l) {
    ConfusionCounts c;
    for (std::size_t i = 0; i < p.size(); ++i) {
        c.tp += p[i] == 0 && l[i] == 0;
        c.fp += p[i] == 0 && l[i] == 255;
        c.fn += p[i] == 255 && l[i] == 0;
        c.tn += p[i] == 255 && l[i] == 255;
    }
    return c;
}

}  // namespace

TEST_CASE("confusion counts") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        auto p = random_mask(rng, 256, 0.3), l = random_mask(rng, 256, 0.2);
        auto c = confusion(p, l);
        CHECK(c == brute(p, l));
        CHECK(c.total() == 256);
        auto same = confusion(l, l);
        CHECK(same.fp == 0);
        CHECK(same.fn == 0);
        auto swapped = confusion(l, p);
        CHECK(swapped.tp == c.tp);
        CHECK(swapped.fp == c.fn);
        CHECK(swapped.fn == c.fp);
    }
    std::vector<std::uint8_t> bg(100, 255), lab(100, 255);
    for (int i = 0; i < 7; ++i) lab[i * 3] = 0;
    auto c = confusion(bg, lab);
    CHECK(c.tp == 0);
    CHECK(c.fn == 7);

    std::vector<std::uint8_t> grey(100, 128);
    CHECK_THROWS_AS(confusion(grey, lab), ValidationError);
    CHECK_THROWS_AS(confusion(std::vector<std::uint8_t>(99, 255), lab), ValidationError);
    Image a{10, 10, 1, bg}, b{20, 5, 1, lab};
    CHECK_THROWS_AS(confusion(a, b), ValidationError);
}

TEST_CASE("metric values") {
    ConfusionCounts c{50, 25, 25, 900};
    CHECK(iou(c) == doctest::Approx(0.5));
    CHECK(dice(c) == doctest::Approx(2.0 / 3));
    CHECK(precision(c) == doctest::Approx(2.0 / 3));
    CHECK(recall(c) == doctest::Approx(2.0 / 3));

    ConfusionCounts perfect{40, 0, 0, 60};
    auto m = metric_report(perfect);
    CHECK(m.iou == 1);
    CHECK(m.dice == 1);
    CHECK(m.precision == 1);
    CHECK(m.recall == 1);

    for (ConfusionCounts z : {ConfusionCounts{0, 5, 0, 95}, ConfusionCounts{0, 0, 5, 95}, ConfusionCounts{0, 3, 4, 93}}) {
        auto r = metric_report(z);
        CHECK(r.iou == 0);
        CHECK(r.dice == 0);
        CHECK(r.precision == 0);
        CHECK(r.recall == 0);
    }
    auto empty = metric_report({0, 0, 0, 100});
    CHECK(empty.iou == 1);
    CHECK(empty.dice == 1);
    CHECK(empty.precision == 1);
    CHECK(empty.recall == 1);

    auto bgr = background_report(c);
    CHECK(bgr.precision == doctest::Approx(900.0 / 925));
}

TEST_CASE("metric identities on random masks") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        auto p = random_mask(rng, 32 * 32, rng.uniform()), l = random_mask(rng, 32 * 32, rng.uniform());
        auto c = confusion(p, l);
        double i = iou(c), d = dice(c), pr = precision(c), re = recall(c);
        if (c.tp + c.fp + c.fn > 0) CHECK(std::abs(d - 2 * i / (1 + i)) <= 1e-12);
        CHECK(i <= d + 1e-15);
        if (c.tp > 0) CHECK(std::abs(d - 2 * pr * re / (pr + re)) <= 1e-12);

        // Joint permutation leaves every count unchanged.
        std::vector<std::size_t> perm(p.size());
        for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
        rng.shuffle(perm.begin(), perm.end());
        std::vector<std::uint8_t> pp(p.size()), ll(l.size());
        for (std::size_t k = 0; k < perm.size(); ++k) pp[k] = p[perm[k]], ll[k] = l[perm[k]];
        CHECK(confusion(pp, ll) == c);
    }
}

TEST_CASE("binarize") {
    std::vector<double> zeros(16, 0.0), ones(16, 1.0), half(16, 0.5);
    for (auto v : binarize(zeros, 4, 4).pixels) CHECK(v == 255);
    for (auto v : binarize(ones, 4, 4).pixels) CHECK(v == 0);
    for (auto v : binarize(half, 4, 4).pixels) CHECK(v == 0);
    Rng rng(5);
    std::vector<double> prob(400);
    for (auto& v : prob) v = rng.uniform();
    std::size_t prev = 400;
    for (double t = 0; t <= 1.0; t += 0.05) {
        auto n = joint_pixel_count(binarize(prob, 20, 20, t));
        CHECK(n <= prev);
        prev = n;
    }
    std::vector<double> bad{0.2, 1.2, 0.1, 0.0};
    CHECK_THROWS_AS(binarize(bad, 2, 2), ValidationError);
    bad[1] = std::nan("");
    CHECK_THROWS_AS(binarize(bad, 2, 2), ValidationError);
    CHECK_THROWS_AS(binarize(zeros, 3, 3), ValidationError);
}

TEST_CASE("pearson_r and fits") {
    std::vector<double> x{1, 2, 3, 4, 5}, y2, yn;
    for (double v : x) y2.push_back(2 * v), yn.push_back(-v);
    CHECK(pearson_r(x, y2) == doctest::Approx(1.0));
    CHECK(pearson_r(x, yn) == doctest::Approx(-1.0));

    Rng rng(9);
    std::vector<double> a(10), b(10);
    for (int i = 0; i < 10; ++i) a[i] = rng.normal(), b[i] = 0.5 * a[i] + rng.normal();
    double ma = 0, mb = 0;
    for (int i = 0; i < 10; ++i) ma += a[i] / 10, mb += b[i] / 10;
    double cov = 0, va = 0, vb = 0;
    for (int i = 0; i < 10; ++i) cov += (a[i] - ma) * (b[i] - mb), va += (a[i] - ma) * (a[i] - ma), vb += (b[i] - mb) * (b[i] - mb);
    CHECK(std::abs(pearson_r(a, b) - cov / std::sqrt(va * vb)) <= 1e-12);

    std::vector<double> flat(5, 3.0);
    CHECK_THROWS_AS(pearson_r(x, flat), ValidationError);
    CHECK_THROWS_AS(pearson_r(std::vector<double>{1}, std::vector<double>{2}), ValidationError);

    // Exact polynomial data is recovered.
    std::vector<double> q;
    for (double v : x) q.push_back(0.5 - 2 * v + 0.25 * v * v);
    auto fit = polyfit(x, q, 2);
    REQUIRE(fit.coeffs.size() == 3);
    CHECK(fit.coeffs[0] == doctest::Approx(0.5));
    CHECK(fit.coeffs[1] == doctest::Approx(-2));
    CHECK(fit.coeffs[2] == doctest::Approx(0.25));
    CHECK(fit.r2 == doctest::Approx(1.0));
    auto lin = polyfit(x, y2, 1);
    CHECK(lin.coeffs[1] == doctest::Approx(2));
    CHECK(std::abs(lin.coeffs[0]) < 1e-9);
    // A quadratic never fits worse than a line.
    auto l1 = polyfit(a, b, 1), l2 = polyfit(a, b, 2);
    CHECK(l2.r2 >= l1.r2 - 1e-12);
    CHECK(l1.r2 == doctest::Approx(pearson_r(a, b) * pearson_r(a, b)));
}

TEST_CASE("aggregation modes") {
    std::vector<EvalRow> rows;
    for (ConfusionCounts c : {ConfusionCounts{10, 0, 0, 90}, ConfusionCounts{0, 0, 30, 70}}) {
        rows.push_back({"x", c, metric_report(c)});
    }
    auto img = aggregate(rows, Aggregate::Image);
    auto pix = aggregate(rows, Aggregate::Pixel);
    CHECK(img.dice == doctest::Approx(0.5));
    CHECK(pix.dice == doctest::Approx(20.0 / 50));
    CHECK(aggregate_from_string("pixel") == Aggregate::Pixel);
    CHECK_THROWS_AS(aggregate_from_string("pooled"), ValidationError);
    CHECK_THROWS_AS(aggregate(std::span<const EvalRow>{}, Aggregate::Image), ValidationError);

    std::stringstream ss;
    write_eval_csv(ss, rows);
    std::string header;
    std::getline(ss, header);
    CHECK(header == "image,tp,fp,fn,tn,iou,dice,precision,recall");

    std::vector<EvalSummary> sums{{"larvik", 3, Aggregate::Image, 2, img}, {"rv4", -1, Aggregate::Pixel, 2, pix}};
    std::stringstream cs;
    write_eval_summary_csv(cs, sums);
    auto back = read_eval_summary_csv(cs);
    REQUIRE(back.size() == 2);
    CHECK(back[0].experiment == "larvik");
    CHECK(back[0].epoch == 3);
    CHECK(back[1].mode == Aggregate::Pixel);
    CHECK(back[1].metrics.dice == doctest::Approx(0.4));
}

TEST_CASE("quality ingest and correlation") {
    std::stringstream csv(
        "experiment,epoch,image,recognisability,persistence,localisation,noise\n"
        "box,1,a.png,5,5,5,5\n"
        "box,1,b.png,1,2,3,4\n"
        "box,1,c.png,0,3,3,3\n"
        "box,2,a.png,3,3,3,3\n"
        "rv4,4,a.png,2,2,x,2\n"
        "rv4,4,b.png,2,2,2\n"
        "rv4,4,c.png,2,2,2,6\n"
        "larvik,7,a.png,4,4,4,5\n");
    auto q = quality_ingest(csv);
    REQUIRE(q.rows.size() == 4);
    CHECK(q.rows[0].score.mean() == 5.0);
    CHECK(q.rows[1].score.mean() == 2.5);
    CHECK(q.rejected.size() == 4);
    CHECK(q.rejected[0].starts_with("line 4:"));
    REQUIRE(q.means.size() == 3);
    CHECK(q.means[0].experiment == "box");
    CHECK(q.means[0].epoch == 1);
    CHECK(q.means[0].mean == doctest::Approx(3.75));

    std::stringstream bad_header("a,b,c\n");
    CHECK_THROWS_AS(quality_ingest(bad_header), ValidationError);

    std::vector<EvalSummary> sums{{"box", 1, Aggregate::Image, 3, {0.5, 0.7, 0.6, 0.8}},
                                  {"box", 2, Aggregate::Image, 3, {0.2, 0.3, 0.3, 0.3}},
                                  {"larvik", 7, Aggregate::Image, 3, {0.5, 0.66, 0.6, 0.7}},
                                  {"rv4", 4, Aggregate::Image, 3, {0.1, 0.1, 0.1, 0.1}}};
    auto pts = join_dice_quality(q.means, sums);
    REQUIRE(pts.size() == 3);
    auto rep = dice_quality_correlation(pts);
    CHECK(rep.n == 3);
    std::vector<double> dx, qy;
    for (const auto& pt : pts) dx.push_back(pt.dice), qy.push_back(pt.quality);
    CHECK(rep.r == doctest::Approx(pearson_r(dx, qy)));
    CHECK(rep.linear.r2 == doctest::Approx(rep.r * rep.r));
    CHECK(rep.quadratic.r2 == doctest::Approx(1.0));
    std::stringstream cc, svg;
    write_correlation_csv(cc, rep);
    CHECK(cc.str().find("pearson_r") != std::string::npos);
    write_dice_quality_svg(svg, pts, rep);
    CHECK(svg.str().find("<polyline") != std::string::npos);
    CHECK(svg.str().find("</svg>") != std::string::npos);
}
