#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fracsynth {

enum class Domain { Synthetic, Real };
enum class SceneKind { Slope, Box };
enum class Split { Unassigned, Train, Val, Test };

std::string to_string(Domain d);
std::string to_string(SceneKind k);
std::string to_string(Split s);
Domain domain_from_string(const std::string& s);
SceneKind scene_kind_from_string(const std::string& s);
Split split_from_string(const std::string& s);

struct ManifestRecord {
    std::string image_path;
    std::string mask_path;
    Domain domain = Domain::Synthetic;
    SceneKind scene_kind = SceneKind::Slope;
    std::string site_tag;  //!< dfn00..dfn26, box, larvik, rv4, cardboard, pattern
    int texture_id = -1;   //!< -1 for real photographs
    Split split = Split::Unassigned;
};

//! A directory of `<stem>.png` / `<stem>_mask.png` pairs and the labels
//! shared by everything in it.
struct ManifestRoot {
    std::string path;
    Domain domain = Domain::Synthetic;
    SceneKind scene_kind = SceneKind::Slope;
    //! Empty: use the file-name prefix before the first underscore.
    std::string site_tag;
};

struct ManifestResult {
    std::vector<ManifestRecord> records;  //!< sorted by image path
    std::vector<std::string> errors;      //!< one line per unmatched file
};

//! Scans each root (non-recursively). Images without a mask, and masks
//! without an image, are skipped and listed in `errors`.
ManifestResult build_manifest(std::span<const ManifestRoot> roots);

void write_manifest_jsonl(std::ostream& os, std::span<const ManifestRecord> records);
std::vector<ManifestRecord> read_manifest_jsonl(std::istream& is);

//! Reassigns every non-test record to train or val, stratified by site tag.
//! The overall val count is round(val_fraction * n); strata receive their
//! share by largest remainder, so each lands within one record of exact.
std::vector<ManifestRecord> split_train_val(std::vector<ManifestRecord> records, std::uint64_t seed,
                                            double val_fraction = 0.1);

//---------------------------------------------------------------------------//
// Experiment matrix
//---------------------------------------------------------------------------//

enum class Strategy { SimpleMixed, Finetune };
std::string to_string(Strategy s);

struct ExperimentDef {
    std::string name;  //!< display name, e.g. "Gen. Larvik"
    std::string slug;  //!< file-name form, e.g. "gen_larvik"
    SceneKind scene_kind;
    std::vector<std::string> real_train_tags;
    std::vector<std::string> real_test_tags;
    bool generalisation = false;
};

//! The ten experiments: five box, five slope.
std::vector<ExperimentDef> experiment_definitions();

struct MatrixOptions {
    std::vector<std::string> architectures{"unet", "deeplabv3plus"};
    std::vector<int> proportions{0, 10, 30, 50, 70, 90, 100};
    //! Share of each real site held out for testing, fixed across all
    //! proportions and strategies.
    double test_fraction = 0.2;
    double val_fraction = 0.1;
};

struct PlanItem {
    std::string role;  //!< train | val | test
    ManifestRecord record;
};

struct ExperimentPlan {
    std::string name;  //!< <arch>__<slug>__<strategy>__<pct>
    std::string architecture;
    ExperimentDef experiment;
    Strategy strategy = Strategy::SimpleMixed;
    int real_percent = 0;
    std::size_t real_pool_size = 0;  //!< real-train pool before sampling
    std::vector<PlanItem> items;

    std::size_t count(const std::string& role, Domain domain) const;
};

//! Materialises every (architecture, experiment, strategy, proportion).
//! Finetune skips 0% and 100%. Throws ValidationError if a source needed by
//! an experiment has no records.
std::vector<ExperimentPlan> build_experiment_matrix(std::span<const ManifestRecord> records, std::uint64_t seed,
                                                    const MatrixOptions& options = {});

//! Header line (type "plan") followed by one line per item (type "item").
void write_plan_jsonl(std::ostream& os, const ExperimentPlan& plan);
ExperimentPlan read_plan_jsonl(std::istream& is);

//! Markdown summary: roster counts, seeds, config hash and the test-holdout
//! note.
void write_datasheet(std::ostream& os, std::span<const ManifestRecord> records,
                     std::span<const ExperimentPlan> plans, std::uint64_t seed, const std::string& config_hash);

}  // namespace fracsynth
