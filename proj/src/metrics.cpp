#include "fracsynth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "fracsynth/error.hpp"

namespace fracsynth {

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> label) {
    require(pred.size() == label.size(), "prediction and label sizes differ");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        std::uint8_t p = pred[i], l = label[i];
        require((p == 0 || p == 255) && (l == 0 || l == 255), "masks must be binary (0 or 255)");
        bool pj = p == kMaskJoint, lj = l == kMaskJoint;
        if (pj && lj) ++c.tp;
        else if (pj) ++c.fp;
        else if (lj) ++c.fn;
        else ++c.tn;
    }
    return c;
}

ConfusionCounts confusion(const Image& pred, const Image& label) {
    require(pred.channels == 1 && label.channels == 1, "masks must have one channel");
    require(pred.width == label.width && pred.height == label.height, "mask dimensions differ");
    return confusion(std::span<const std::uint8_t>(pred.pixels), std::span<const std::uint8_t>(label.pixels));
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den, const ConfusionCounts& c) {
    if (den == 0) return (c.tp + c.fp + c.fn) == 0 ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double iou(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp + c.fn, c); }
double dice(const ConfusionCounts& c) { return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, c); }
double precision(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp, c); }
double recall(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn, c); }

MetricReport metric_report(const ConfusionCounts& c) { return {iou(c), dice(c), precision(c), recall(c)}; }

MetricReport background_report(const ConfusionCounts& c) { return metric_report({c.tn, c.fn, c.fp, c.tp}); }

Image binarize(std::span<const double> prob, int width, int height, double threshold) {
    require(width > 0 && height > 0, "image dimensions must be positive");
    require(prob.size() == std::size_t(width) * height, "probability map size mismatch");
    Image out{width, height, 1, std::vector<std::uint8_t>(prob.size())};
    for (std::size_t i = 0; i < prob.size(); ++i) {
        require(prob[i] >= 0 && prob[i] <= 1, "probabilities must lie in [0, 1]");
        out.pixels[i] = prob[i] >= threshold ? kMaskJoint : kMaskBackground;
    }
    return out;
}

double pearson_r(std::span<const double> xs, std::span<const double> ys) {
    require(xs.size() == ys.size(), "series lengths differ");
    require(xs.size() >= 2, "correlation needs at least two pairs");
    double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
    mx /= n, my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy, sxx += dx * dx, syy += dy * dy;
    }
    require(sxx > 0 && syy > 0, "correlation is undefined for a constant series");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double PolyFit::operator()(double x) const {
    double y = 0;
    for (std::size_t k = coeffs.size(); k-- > 0;) y = y * x + coeffs[k];
    return y;
}

PolyFit polyfit(std::span<const double> xs, std::span<const double> ys, int degree) {
    require(degree >= 0 && degree <= 6, "polynomial degree must lie in [0, 6]");
    require(xs.size() == ys.size(), "series lengths differ");
    const int m = degree + 1;
    require(xs.size() > static_cast<std::size_t>(degree), "too few points for the polynomial degree");
    // Normal equations on centred x for conditioning.
    double cx = 0;
    for (double x : xs) cx += x;
    cx /= static_cast<double>(xs.size());
    std::vector<std::vector<double>> a(m, std::vector<double>(m + 1, 0.0));
    for (std::size_t i = 0; i < xs.size(); ++i) {
        std::vector<double> pw(2 * m, 1.0);
        for (int k = 1; k < 2 * m; ++k) pw[k] = pw[k - 1] * (xs[i] - cx);
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < m; ++c) a[r][c] += pw[r + c];
            a[r][m] += pw[r] * ys[i];
        }
    }
    for (int col = 0; col < m; ++col) {
        int piv = col;
        for (int r = col + 1; r < m; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        require(std::abs(a[piv][col]) > 1e-300, "polynomial fit is singular (too few distinct x values)");
        std::swap(a[col], a[piv]);
        for (int r = 0; r < m; ++r) {
            if (r == col) continue;
            double f = a[r][col] / a[col][col];
            for (int c = col; c <= m; ++c) a[r][c] -= f * a[col][c];
        }
    }
    std::vector<double> centred(m);
    for (int k = 0; k < m; ++k) centred[k] = a[k][m] / a[k][k];
    // Expand p(x - cx) into powers of x.
    PolyFit fit;
    fit.coeffs.assign(m, 0.0);
    for (int k = 0; k < m; ++k) {
        // (x - cx)^k = sum_j C(k, j) x^j (-cx)^(k-j)
        double c = 1;
        for (int j = 0; j <= k; ++j) {
            if (j > 0) c = c * (k - j + 1) / j;
            fit.coeffs[j] += centred[k] * c * std::pow(-cx, k - j);
        }
    }
    double my = 0;
    for (double y : ys) my += y;
    my /= static_cast<double>(ys.size());
    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double e = ys[i] - fit(xs[i]);
        ss_res += e * e;
        ss_tot += (ys[i] - my) * (ys[i] - my);
    }
    fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

//---------------------------------------------------------------------------//
// Evaluation tables
//---------------------------------------------------------------------------//

std::string to_string(Aggregate a) { return a == Aggregate::Image ? "image" : "pixel"; }

Aggregate aggregate_from_string(const std::string& s) {
    if (s == "image") return Aggregate::Image;
    if (s == "pixel") return Aggregate::Pixel;
    throw ValidationError("aggregate must be 'image' or 'pixel', got '" + s + "'");
}

MetricReport aggregate(std::span<const EvalRow> rows, Aggregate mode) {
    require(!rows.empty(), "nothing to aggregate");
    if (mode == Aggregate::Pixel) {
        ConfusionCounts sum;
        for (const auto& r : rows) sum += r.counts;
        return metric_report(sum);
    }
    MetricReport m;
    for (const auto& r : rows) {
        m.iou += r.metrics.iou;
        m.dice += r.metrics.dice;
        m.precision += r.metrics.precision;
        m.recall += r.metrics.recall;
    }
    double n = static_cast<double>(rows.size());
    return {m.iou / n, m.dice / n, m.precision / n, m.recall / n};
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) {
        while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ')) cur.pop_back();
        std::size_t b = cur.find_first_not_of(' ');
        out.push_back(b == std::string::npos ? "" : cur.substr(b));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_int(const std::string& s, int& out) {
    try {
        std::size_t pos = 0;
        out = std::stoi(s, &pos);
        return pos == s.size();
    } catch (const std::exception&) {
        return false;
    }
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError("invalid " + what + ": '" + s + "'");
}

}  // namespace

void write_eval_csv(std::ostream& os, std::span<const EvalRow> rows) {
    os << "image,tp,fp,fn,tn,iou,dice,precision,recall\n";
    for (const auto& r : rows) {
        os << r.image << ',' << r.counts.tp << ',' << r.counts.fp << ',' << r.counts.fn << ',' << r.counts.tn << ','
           << fmt(r.metrics.iou) << ',' << fmt(r.metrics.dice) << ',' << fmt(r.metrics.precision) << ','
           << fmt(r.metrics.recall) << '\n';
    }
}

void write_eval_summary_csv(std::ostream& os, std::span<const EvalSummary> rows) {
    os << "experiment,epoch,aggregate,n_images,iou,dice,precision,recall\n";
    for (const auto& r : rows) {
        os << r.experiment << ',' << r.epoch << ',' << to_string(r.mode) << ',' << r.n_images << ','
           << fmt(r.metrics.iou) << ',' << fmt(r.metrics.dice) << ',' << fmt(r.metrics.precision) << ','
           << fmt(r.metrics.recall) << '\n';
    }
}

std::vector<EvalSummary> read_eval_summary_csv(std::istream& is) {
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), "summary CSV is empty");
    std::vector<EvalSummary> out;
    std::size_t n = 1;
    while (std::getline(is, line)) {
        ++n;
        if (line.find_first_not_of(" \r") == std::string::npos) continue;
        auto f = split_csv(line);
        require(f.size() == 8, "summary CSV line " + std::to_string(n) + " needs 8 fields");
        EvalSummary s;
        s.experiment = f[0];
        require(parse_int(f[1], s.epoch), "summary CSV line " + std::to_string(n) + ": bad epoch");
        s.mode = aggregate_from_string(f[2]);
        s.n_images = static_cast<std::size_t>(parse_double(f[3], "n_images"));
        s.metrics = {parse_double(f[4], "iou"), parse_double(f[5], "dice"), parse_double(f[6], "precision"),
                     parse_double(f[7], "recall")};
        out.push_back(s);
    }
    return out;
}

QualityIngest quality_ingest(std::istream& is) {
    QualityIngest out;
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), "quality CSV is empty");
    auto header = split_csv(line);
    const std::vector<std::string> expect{"experiment", "epoch", "image", "recognisability",
                                          "persistence", "localisation", "noise"};
    require(header == expect, "quality CSV header must be: experiment,epoch,image,recognisability,persistence,localisation,noise");
    std::size_t n = 1;
    while (std::getline(is, line)) {
        ++n;
        if (line.find_first_not_of(" \r") == std::string::npos) continue;
        auto f = split_csv(line);
        std::string where = "line " + std::to_string(n) + ": ";
        if (f.size() != 7) {
            out.rejected.push_back(where + "expected 7 fields");
            continue;
        }
        QualityRow row;
        row.experiment = f[0];
        row.image = f[2];
        int s[4];
        bool ok = parse_int(f[1], row.epoch);
        if (!ok) {
            out.rejected.push_back(where + "epoch is not an integer");
            continue;
        }
        std::string bad;
        for (int k = 0; k < 4; ++k) {
            if (!parse_int(f[3 + k], s[k]) || s[k] < 1 || s[k] > 5) {
                bad = expect[3 + k] + " must be an integer in 1..5";
                break;
            }
        }
        if (!bad.empty()) {
            out.rejected.push_back(where + bad);
            continue;
        }
        row.score = {s[0], s[1], s[2], s[3]};
        out.rows.push_back(row);
    }
    std::map<std::pair<std::string, int>, std::pair<std::size_t, double>> acc;
    for (const auto& r : out.rows) {
        auto& a = acc[{r.experiment, r.epoch}];
        ++a.first;
        a.second += r.score.mean();
    }
    for (const auto& [key, a] : acc) out.means.push_back({key.first, key.second, a.first, a.second / a.first});
    return out;
}

std::vector<DiceQualityPoint> join_dice_quality(std::span<const QualityMean> quality,
                                                std::span<const EvalSummary> summaries) {
    std::map<std::pair<std::string, int>, double> dice_of;
    for (const auto& s : summaries) dice_of[{s.experiment, s.epoch}] = s.metrics.dice;
    std::vector<DiceQualityPoint> out;
    for (const auto& q : quality) {
        auto it = dice_of.find({q.experiment, q.epoch});
        if (it != dice_of.end()) out.push_back({q.experiment, q.epoch, it->second, q.mean});
    }
    return out;
}

CorrelationReport dice_quality_correlation(std::span<const DiceQualityPoint> points) {
    std::vector<double> x, y;
    for (const auto& p : points) x.push_back(p.dice), y.push_back(p.quality);
    CorrelationReport rep;
    rep.n = points.size();
    rep.r = pearson_r(x, y);
    rep.linear = polyfit(x, y, 1);
    if (points.size() >= 3) rep.quadratic = polyfit(x, y, 2);
    return rep;
}

void write_correlation_csv(std::ostream& os, const CorrelationReport& r) {
    auto coeff = [](const PolyFit& f, std::size_t k) { return k < f.coeffs.size() ? fmt(f.coeffs[k]) : std::string(""); };
    os << "n,pearson_r,linear_c0,linear_c1,linear_r2,quadratic_c0,quadratic_c1,quadratic_c2,quadratic_r2,r2_delta\n";
    os << r.n << ',' << fmt(r.r) << ',' << coeff(r.linear, 0) << ',' << coeff(r.linear, 1) << ',' << fmt(r.linear.r2)
       << ',' << coeff(r.quadratic, 0) << ',' << coeff(r.quadratic, 1) << ',' << coeff(r.quadratic, 2) << ','
       << (r.quadratic.coeffs.empty() ? "" : fmt(r.quadratic.r2)) << ','
       << (r.quadratic.coeffs.empty() ? "" : fmt(r.quadratic.r2 - r.linear.r2)) << '\n';
}

void write_dice_quality_svg(std::ostream& os, std::span<const DiceQualityPoint> points,
                            const CorrelationReport& report) {
    // Dice in [0, 1] on x, quality in [1, 5] on y.
    const double W = 480, H = 360, M = 48;
    auto px = [&](double d, double q) {
        return std::pair<double, double>{M + d * (W - 2 * M), H - M - (q - 1) / 4 * (H - 2 * M)};
    };
    char buf[256];
    std::snprintf(buf, sizeof buf, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n", W, H);
    os << buf;
    auto [x0, y0] = px(0, 1);
    auto [x1, y1] = px(1, 5);
    std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n",
                  x0, y1, x1 - x0, y0 - y1);
    os << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\">Dice (joints)</text><text x=\"4\" y=\"%.1f\">quality</text>\n",
                  W / 2 - 40, H - 12, H / 2);
    os << buf;
    for (const auto& p : points) {
        auto [x, y] = px(std::clamp(p.dice, 0.0, 1.0), std::clamp(p.quality, 1.0, 5.0));
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\"><title>%s@%d</title></circle>\n", x, y,
                      p.experiment.c_str(), p.epoch);
        os << buf;
    }
    auto curve = [&](const PolyFit& f, const char* colour) {
        if (f.coeffs.empty()) return;
        os << "<polyline fill=\"none\" stroke=\"" << colour << "\" points=\"";
        for (int i = 0; i <= 50; ++i) {
            double d = i / 50.0;
            auto [x, y] = px(d, std::clamp(f(d), 1.0, 5.0));
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x, y);
            os << buf;
        }
        os << "\"/>\n";
    };
    curve(report.linear, "steelblue");
    curve(report.quadratic, "darkorange");
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"20\">r = %.3f, n = %zu</text>\n", M, report.r, report.n);
    os << buf << "</svg>\n";
}

}  // namespace fracsynth
