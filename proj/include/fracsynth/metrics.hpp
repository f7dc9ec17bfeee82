#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fracsynth/imaging.hpp"

namespace fracsynth {

//! Pixel counts with joint (mask value 0) as the positive class.
struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp, fp += o.fp, fn += o.fn, tn += o.tn;
        return *this;
    }
    bool operator==(const ConfusionCounts&) const = default;
};

//! Both buffers must be equally sized and hold only 0 or 255.
ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> label);
//! Single-channel masks of equal dimensions.
ConfusionCounts confusion(const Image& pred, const Image& label);

// A zero denominator yields 1 when neither mask has a joint pixel, else 0.
double iou(const ConfusionCounts& c);
double dice(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);

struct MetricReport {
    double iou = 0, dice = 0, precision = 0, recall = 0;
};

MetricReport metric_report(const ConfusionCounts& c);
//! Same metrics with background (255) as the positive class.
MetricReport background_report(const ConfusionCounts& c);

//! prob >= threshold becomes joint (0), everything else background (255).
Image binarize(std::span<const double> prob, int width, int height, double threshold = 0.5);

//! Sample Pearson coefficient. Throws ValidationError for fewer than two
//! pairs, mismatched lengths, or a constant series.
double pearson_r(std::span<const double> xs, std::span<const double> ys);

//! Least-squares polynomial, coeffs[k] multiplies x^k.
struct PolyFit {
    std::vector<double> coeffs;
    double r2 = 0;

    double operator()(double x) const;
};

PolyFit polyfit(std::span<const double> xs, std::span<const double> ys, int degree);

//---------------------------------------------------------------------------//
// Per-image evaluation
//---------------------------------------------------------------------------//

enum class Aggregate { Image, Pixel };
std::string to_string(Aggregate a);
Aggregate aggregate_from_string(const std::string& s);

struct EvalRow {
    std::string image;
    ConfusionCounts counts;
    MetricReport metrics;
};

//! Image: mean of per-image metrics. Pixel: metrics of the summed counts.
MetricReport aggregate(std::span<const EvalRow> rows, Aggregate mode);

//! `image,tp,fp,fn,tn,iou,dice,precision,recall`
void write_eval_csv(std::ostream& os, std::span<const EvalRow> rows);

struct EvalSummary {
    std::string experiment;
    int epoch = -1;
    Aggregate mode = Aggregate::Image;
    std::size_t n_images = 0;
    MetricReport metrics;
};

//! `experiment,epoch,aggregate,n_images,iou,dice,precision,recall`
void write_eval_summary_csv(std::ostream& os, std::span<const EvalSummary> rows);
std::vector<EvalSummary> read_eval_summary_csv(std::istream& is);

//---------------------------------------------------------------------------//
// Qualitative scores
//---------------------------------------------------------------------------//

struct QualityScore {
    int recognisability = 1, persistence = 1, localisation = 1, noise = 1;

    double mean() const { return (recognisability + persistence + localisation + noise) / 4.0; }
};

struct QualityRow {
    std::string experiment;
    int epoch = -1;
    std::string image;
    QualityScore score;
};

struct QualityMean {
    std::string experiment;
    int epoch = -1;
    std::size_t n = 0;
    double mean = 0;
};

struct QualityIngest {
    std::vector<QualityRow> rows;
    std::vector<std::string> rejected;  //!< "line N: reason"
    std::vector<QualityMean> means;     //!< per (experiment, epoch), sorted
};

//! CSV with header `experiment,epoch,image,recognisability,persistence,
//! localisation,noise`; rows with scores outside 1..5 or malformed fields
//! are rejected and reported.
QualityIngest quality_ingest(std::istream& is);

struct DiceQualityPoint {
    std::string experiment;
    int epoch = -1;
    double dice = 0;
    double quality = 0;
};

//! Pairs quality means with summaries on (experiment, epoch).
std::vector<DiceQualityPoint> join_dice_quality(std::span<const QualityMean> quality,
                                                std::span<const EvalSummary> summaries);

struct CorrelationReport {
    std::size_t n = 0;
    double r = 0;
    PolyFit linear;
    PolyFit quadratic;
};

CorrelationReport dice_quality_correlation(std::span<const DiceQualityPoint> points);

void write_correlation_csv(std::ostream& os, const CorrelationReport& report);
//! Scatter of Dice (x) against mean quality (y) with both fitted curves.
void write_dice_quality_svg(std::ostream& os, std::span<const DiceQualityPoint> points,
                            const CorrelationReport& report);

}  // namespace fracsynth
