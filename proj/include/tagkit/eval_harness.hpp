#ifndef TAGKIT_EVAL_HARNESS_HPP
#define TAGKIT_EVAL_HARNESS_HPP

// Quantitative evaluation: full-message recovery and bit accuracy across
// manipulations and degradation sweeps, fidelity of the tagged image
// (always measured against the clean input, never post-manipulation), and
// report rendering in the shape of the reference tables.

#include <cstdint>
#include <string>
#include <vector>

#include "tagkit/data_pipeline.hpp"
#include "tagkit/manip.hpp"
#include "tagkit/message_codec.hpp"
#include "tagkit/model.hpp"

namespace tagkit {

struct EvalRow {
    std::string manipulation;  // label from manipulation_label()
    int image_size = 0;
    int n_bits = 0;
    EmbedLevel embed_level = EmbedLevel::Late;
    double fmrr = 0.0;
    double bit_accuracy = 0.0;
    double psnr_db = 0.0;  // +inf means bit-identical; see psnr_str()
    double ssim = 0.0;
    int n_images = 0;

    bool operator==(const EvalRow&) const = default;
};

// Stable, comma-free label: the kind name plus whichever knob matters,
// e.g. "jpeg_proxy q=80", "region_replace c=0.30 recolor i=0.75".
std::string manipulation_label(const ManipulationSpec& spec);

// Report grouping: "clean", "synthesis" (face-editing stand-ins),
// "degradation" (signal-level damage), or "external".
const char* manipulation_family(ManipulationKind k);

struct EvalOptions {
    const ProxyReconstructor* proxy = nullptr;  // reconstruct-backed kinds need one
    int max_images = 0;                         // 0 = the whole split
};

// One row per manipulation. Per image: draw a fresh random message, tag,
// record PSNR/SSIM(input, tagged), manipulate, decode, hard-decide.
// fmrr = fraction of images whose whole message came back; bit_accuracy is
// the mean per-image accuracy. Deterministic given the seed. An external
// command failing mid-run raises ExternalToolError with partial_results set
// when earlier rows had already finished.
std::vector<EvalRow> evaluate(const TaggerModel& model, const Dataset& ds, Split split,
                              const std::vector<ManipulationSpec>& manips,
                              const MessageSpec& spec, std::uint64_t seed,
                              const EvalOptions& opt = {});

enum class SweepAxis { MessageSize, CompressionQuality, ResizeScale, EmbedLevel };

const char* sweep_axis_name(SweepAxis a);
SweepAxis sweep_axis_from_name(const std::string& s);

// One evaluate() per axis value with everything else held fixed.
// CompressionQuality and ResizeScale turn each value into the matching
// degradation applied to the single `checkpoint`; MessageSize and EmbedLevel
// need one checkpoint per value (the knob is baked into the weights) and
// evaluate all of them under the fixed `manipulation`.
struct SweepConfig {
    SweepAxis axis = SweepAxis::CompressionQuality;
    std::vector<double> values;             // numeric axes; message sizes are integral
    std::vector<EmbedLevel> levels;         // EmbedLevel axis only
    std::string checkpoint;                 // single-checkpoint axes
    std::vector<std::string> checkpoints;   // per-value axes, aligned with values/levels
    ManipulationSpec manipulation;          // context for the per-checkpoint axes
    DatasetConfig data;
    Split split = Split::Test;
    std::uint64_t seed = 1;
    int max_images = 0;

    void validate() const;
};

struct SweepPoint {
    std::string value;  // axis value as it appears in the CSV
    EvalRow row;

    bool operator==(const SweepPoint&) const = default;
};

std::vector<SweepPoint> sweep(const SweepConfig& cfg, const EvalOptions& opt = {});

// axis_value,fmrr,bit_accuracy — one line per point, in sweep order.
void write_sweep_csv(const std::string& path, const std::vector<SweepPoint>& points);

// Markdown and CSV carry the same tables cell for cell: per family a
// full-recovery table (rows = image sizes, columns = manipulations, plus an
// average row), then a flat per-row detail table.
struct Report {
    std::string markdown;
    std::string csv;
};

Report render_report(const std::vector<EvalRow>& rows);

// report.md and rows.csv under out_dir (created if needed).
void write_report(const std::string& out_dir, const std::vector<EvalRow>& rows);

// ---- JSON-driven jobs (command-line entry points) ----

// An evaluation run described by a config file. Leaving `manipulations`
// empty selects the standard suite: identity, region_replace c=0.30 recolor,
// jpeg_proxy q=80, resize_cycle s=0.50, gaussian_noise s=0.05, and
// global_reconstruct whenever a proxy_path is given.
struct EvalJob {
    std::string checkpoint;
    std::string proxy_path;  // optional; required by reconstruct-backed kinds
    DatasetConfig data;
    Split split = Split::Test;
    std::uint64_t seed = 1;
    int max_images = 0;
    std::vector<ManipulationSpec> manipulations;

    void validate() const;
};

EvalJob eval_job_from_json(const std::string& json_text);
EvalJob load_eval_job(const std::string& path);

// Loads the checkpoint (and proxy, if any), evaluates, and writes
// report.md + rows.csv under out_dir. Returns the rows.
std::vector<EvalRow> run_eval_job(const EvalJob& job, const std::string& out_dir);

struct SweepJob {
    SweepConfig config;
    std::string proxy_path;  // for a reconstruct-backed context manipulation
};

SweepJob sweep_job_from_json(const std::string& json_text);
SweepJob load_sweep_job(const std::string& path);

// Runs the sweep and writes sweep_<axis>.csv under out_dir. Returns the points.
std::vector<SweepPoint> run_sweep_job(const SweepJob& job, const std::string& out_dir);

}  // namespace tagkit

#endif
