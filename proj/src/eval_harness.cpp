#include "tagkit/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "tagkit/errors.hpp"
#include "tagkit/metrics.hpp"
#include "tagkit/rng.hpp"
#include "tagkit/trainer.hpp"

namespace tagkit {

namespace fs = std::filesystem;

namespace {

std::string num(const char* f, double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string fmt4(double v) { return num("%.4f", v); }

const char* region_effect_word(RegionEffect e) {
    switch (e) {
        case RegionEffect::Recolor: return "recolor";
        case RegionEffect::Blur: return "blur";
        case RegionEffect::Reconstruct: return "reconstruct";
    }
    return "?";
}

bool spec_needs_proxy(const ManipulationSpec& m) {
    return m.kind == ManipulationKind::GlobalReconstruct ||
           (m.kind == ManipulationKind::RegionReplace && m.effect == RegionEffect::Reconstruct);
}

}  // namespace

std::string manipulation_label(const ManipulationSpec& spec) {
    std::string s = manipulation_kind_name(spec.kind);
    switch (spec.kind) {
        case ManipulationKind::RegionReplace:
            s += " c=" + num("%.2f", spec.coverage) + " " + region_effect_word(spec.effect);
            break;
        case ManipulationKind::JpegProxy:
            s += " q=" + std::to_string(spec.quality);
            break;
        case ManipulationKind::ResizeCycle:
            s += " s=" + num("%.2f", spec.scale);
            break;
        case ManipulationKind::Blur:
            s += " s=" + num("%.1f", spec.sigma);
            break;
        case ManipulationKind::GaussianNoise:
            s += " s=" + num("%.3f", spec.sigma);
            break;
        default:
            break;
    }
    if (spec.intensity != 1.0) s += " i=" + num("%.2f", spec.intensity);
    return s;
}

const char* manipulation_family(ManipulationKind k) {
    switch (k) {
        case ManipulationKind::Identity:
            return "clean";
        case ManipulationKind::RegionReplace:
        case ManipulationKind::GlobalReconstruct:
        case ManipulationKind::ColorShift:
            return "synthesis";
        case ManipulationKind::Blur:
        case ManipulationKind::GaussianNoise:
        case ManipulationKind::JpegProxy:
        case ManipulationKind::ResizeCycle:
            return "degradation";
        case ManipulationKind::External:
            return "external";
    }
    return "?";
}

std::vector<EvalRow> evaluate(const TaggerModel& model, const Dataset& ds, Split split,
                              const std::vector<ManipulationSpec>& manips,
                              const MessageSpec& spec, std::uint64_t seed,
                              const EvalOptions& opt) {
    spec.validate();
    const ModelConfig& mc = model.config();
    if (ds.image_size() != mc.image_size)
        throw ShapeError("dataset images are " + std::to_string(ds.image_size()) +
                         "px but the checkpoint expects " + std::to_string(mc.image_size) + "px");
    if (spec.n_bits != mc.n_bits || spec.repetition_factor != mc.repetition_factor)
        throw ShapeError("message spec " + std::to_string(spec.n_bits) + "x" +
                         std::to_string(spec.repetition_factor) +
                         " does not match the checkpoint (" + std::to_string(mc.n_bits) + "x" +
                         std::to_string(mc.repetition_factor) + ")");

    for (const ManipulationSpec& m : manips) {
        m.validate();
        if (spec_needs_proxy(m) && !opt.proxy)
            throw DependencyError("manipulation '" + manipulation_label(m) +
                                  "' needs a reconstructor; none was given");
    }

    std::vector<std::size_t> idx = ds.indices(split);
    if (opt.max_images > 0 && int(idx.size()) > opt.max_images)
        idx.resize(std::size_t(opt.max_images));
    if (idx.empty()) throw IngestError("evaluation split is empty");

    Tensor mask = default_mask(mc.image_size, MaskKind::Uniform);

    // One message and one tagged image per input, shared by every row: rows
    // then differ only by what the manipulation did, not by message luck,
    // and fidelity (measured against the clean input) is encoded once.
    std::vector<Bits> truth(idx.size());
    std::vector<Tensor> tagged(idx.size());
    std::vector<std::uint64_t> item_seed(idx.size());
    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        item_seed[k] = Rng::derive(Rng::derive(seed, 0xEA57A000ULL), k);
        Rng rng(item_seed[k]);
        Bits msg(std::size_t(spec.n_bits));
        for (auto& b : msg) b = std::uint8_t(rng.bit());

        const Tensor& image = ds.image(idx[k]);
        tagged[k] = model.encode_image(image, msg, mask);
        psnr_sum += psnr(image, tagged[k]);
        ssim_sum += ssim(image, tagged[k]);
        truth[k] = std::move(msg);
    }

    std::vector<EvalRow> rows;
    rows.reserve(manips.size());
    for (std::size_t mi = 0; mi < manips.size(); ++mi) {
        const ManipulationSpec& m = manips[mi];
        std::vector<Bits> decoded;
        decoded.reserve(idx.size());
        double acc_sum = 0.0;

        for (std::size_t k = 0; k < idx.size(); ++k) {
            Tensor suspect;
            try {
                suspect = apply(m, tagged[k], Rng::derive(item_seed[k], 0x51), opt.proxy);
            } catch (const ExternalToolError& e) {
                // earlier rows (and this row's finished images) are lost with us
                std::string what = e.what();
                const std::string prefix = "external tool error: ";
                if (what.rfind(prefix, 0) == 0) what = what.substr(prefix.size());
                throw ExternalToolError("'" + manipulation_label(m) + "' failed at image " +
                                            std::to_string(k + 1) + "/" +
                                            std::to_string(idx.size()) + ": " + what,
                                        /*partial=*/mi > 0 || k > 0);
            }
            Bits got = TaggerModel::hard_decision(model.decode_soft(suspect), spec);
            acc_sum += bit_accuracy(got, truth[k]);
            decoded.push_back(std::move(got));
        }

        EvalRow row;
        row.manipulation = manipulation_label(m);
        row.image_size = mc.image_size;
        row.n_bits = spec.n_bits;
        row.embed_level = mc.embed_level;
        row.fmrr = fmrr(decoded, truth);
        row.bit_accuracy = acc_sum / double(idx.size());
        row.psnr_db = psnr_sum / double(idx.size());
        row.ssim = ssim_sum / double(idx.size());
        row.n_images = int(idx.size());
        rows.push_back(std::move(row));
    }
    return rows;
}

const char* sweep_axis_name(SweepAxis a) {
    switch (a) {
        case SweepAxis::MessageSize: return "message_size";
        case SweepAxis::CompressionQuality: return "compression_quality";
        case SweepAxis::ResizeScale: return "resize_scale";
        case SweepAxis::EmbedLevel: return "embed_level";
    }
    return "?";
}

SweepAxis sweep_axis_from_name(const std::string& s) {
    for (int a = 0; a <= int(SweepAxis::EmbedLevel); ++a)
        if (s == sweep_axis_name(SweepAxis(a))) return SweepAxis(a);
    throw ConfigError("unknown sweep axis: " + s);
}

void SweepConfig::validate() const {
    data.validate();
    manipulation.validate();
    if (axis == SweepAxis::EmbedLevel) {
        if (!values.empty())
            throw ConfigError("an embed_level sweep lists levels, not numeric values");
        if (levels.size() < 2) throw ConfigError("a sweep needs at least 2 axis values");
        for (std::size_t i = 0; i < levels.size(); ++i)
            for (std::size_t j = i + 1; j < levels.size(); ++j)
                if (levels[i] == levels[j])
                    throw ConfigError(std::string("duplicate embed level in sweep: ") +
                                      embed_level_name(levels[i]));
        return;
    }
    if (!levels.empty()) throw ConfigError("levels are only meaningful on the embed_level axis");
    if (values.size() < 2) throw ConfigError("a sweep needs at least 2 axis values");
    bool ascending = values[1] > values[0];
    for (std::size_t i = 1; i < values.size(); ++i) {
        bool up = values[i] > values[i - 1];
        if (values[i] == values[i - 1] || up != ascending)
            throw ConfigError("sweep values must be strictly ordered");
    }
    for (double v : values) {
        switch (axis) {
            case SweepAxis::MessageSize:
                if (v != std::floor(v) || v < 1 || v > 63)
                    throw ConfigError("message sizes must be whole numbers in [1,63]");
                break;
            case SweepAxis::CompressionQuality:
                if (v != std::floor(v) || v < 1 || v > 100)
                    throw ConfigError("compression qualities must be whole numbers in [1,100]");
                break;
            case SweepAxis::ResizeScale:
                if (!(v > 0.0 && v <= 1.0))
                    throw ConfigError("resize scales must lie in (0,1]");
                break;
            default:
                break;
        }
    }
}

std::vector<SweepPoint> sweep(const SweepConfig& cfg, const EvalOptions& opt) {
    cfg.validate();
    Dataset ds(cfg.data);
    bool per_checkpoint =
        cfg.axis == SweepAxis::MessageSize || cfg.axis == SweepAxis::EmbedLevel;
    std::size_t npoints =
        cfg.axis == SweepAxis::EmbedLevel ? cfg.levels.size() : cfg.values.size();

    std::vector<SweepPoint> out;
    out.reserve(npoints);

    if (per_checkpoint) {
        std::string gaps;
        for (std::size_t i = 0; i < npoints; ++i) {
            if (i < cfg.checkpoints.size() && !cfg.checkpoints[i].empty()) continue;
            if (!gaps.empty()) gaps += ", ";
            gaps += cfg.axis == SweepAxis::EmbedLevel
                        ? embed_level_name(cfg.levels[i])
                        : std::to_string(int(cfg.values[i]));
        }
        if (!gaps.empty())
            throw DependencyError(std::string("the ") + sweep_axis_name(cfg.axis) +
                                  " sweep has no checkpoint for: " + gaps);

        for (std::size_t i = 0; i < npoints; ++i) {
            Checkpoint ck = load_checkpoint(cfg.checkpoints[i]);
            std::string label;
            if (cfg.axis == SweepAxis::MessageSize) {
                int want = int(cfg.values[i]);
                if (ck.config.n_bits != want)
                    throw ConfigError("checkpoint " + cfg.checkpoints[i] + " carries " +
                                      std::to_string(ck.config.n_bits) +
                                      " bits but the axis point is " + std::to_string(want));
                label = std::to_string(want);
            } else {
                if (ck.config.embed_level != cfg.levels[i])
                    throw ConfigError("checkpoint " + cfg.checkpoints[i] + " embeds at level " +
                                      embed_level_name(ck.config.embed_level) +
                                      " but the axis point is " +
                                      embed_level_name(cfg.levels[i]));
                label = embed_level_name(cfg.levels[i]);
            }
            std::vector<EvalRow> rows =
                evaluate(ck.model, ds, cfg.split, {cfg.manipulation}, ck.model.message_spec(),
                         cfg.seed, {opt.proxy, cfg.max_images});
            out.push_back({label, rows.front()});
        }
        return out;
    }

    if (cfg.checkpoint.empty())
        throw DependencyError(std::string(sweep_axis_name(cfg.axis)) +
                              " sweeps need a checkpoint");
    Checkpoint ck = load_checkpoint(cfg.checkpoint);
    for (std::size_t i = 0; i < npoints; ++i) {
        ManipulationSpec m;
        std::string label;
        if (cfg.axis == SweepAxis::CompressionQuality) {
            m.kind = ManipulationKind::JpegProxy;
            m.quality = int(cfg.values[i]);
            label = std::to_string(m.quality);
        } else {
            m.kind = ManipulationKind::ResizeCycle;
            m.scale = cfg.values[i];
            label = num("%.2f", m.scale);
        }
        std::vector<EvalRow> rows = evaluate(ck.model, ds, cfg.split, {m},
                                             ck.model.message_spec(), cfg.seed,
                                             {opt.proxy, cfg.max_images});
        out.push_back({label, rows.front()});
    }
    return out;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepPoint>& points) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << "axis_value,fmrr,bit_accuracy\n";
    for (const SweepPoint& p : points)
        f << p.value << ',' << fmt4(p.row.fmrr) << ',' << fmt4(p.row.bit_accuracy) << '\n';
    if (!f.good()) throw IoError("failed while writing " + path);
}

namespace {

std::string family_of_label(const std::string& label) {
    std::string head = label.substr(0, label.find(' '));
    try {
        return manipulation_family(manipulation_kind_from_name(head));
    } catch (const ConfigError&) {
        return "other";  // hand-made rows still render, in their own table
    }
}

}  // namespace

Report render_report(const std::vector<EvalRow>& rows) {
    if (rows.empty()) throw ConfigError("cannot render a report from zero rows");

    // family -> column labels in first appearance order; sizes ascending
    std::vector<std::string> fam_order;
    std::map<std::string, std::vector<std::string>> fam_cols;
    std::map<std::string, std::set<int>> fam_sizes;
    std::map<std::string, std::map<std::pair<int, std::string>, double>> cells;
    for (const EvalRow& r : rows) {
        std::string fam = family_of_label(r.manipulation);
        if (!fam_cols.count(fam)) fam_order.push_back(fam);
        auto& cols = fam_cols[fam];
        if (std::find(cols.begin(), cols.end(), r.manipulation) == cols.end())
            cols.push_back(r.manipulation);
        fam_sizes[fam].insert(r.image_size);
        cells[fam][{r.image_size, r.manipulation}] = r.fmrr;
    }

    std::string md = "# evaluation report\n";
    std::string csv;

    for (const std::string& fam : fam_order) {
        const auto& cols = fam_cols[fam];
        md += "\n## " + fam + "\n\n| image_size |";
        csv += "# " + fam + "\nimage_size";
        std::string rule = "| ---: |";
        for (const std::string& c : cols) {
            md += " " + c + " |";
            csv += "," + c;
            rule += " ---: |";
        }
        md += "\n" + rule + "\n";
        csv += "\n";

        std::map<std::string, std::pair<double, int>> col_sum;  // label -> (sum, count)
        for (int size : fam_sizes[fam]) {
            md += "| " + std::to_string(size) + " |";
            csv += std::to_string(size);
            for (const std::string& c : cols) {
                auto it = cells[fam].find({size, c});
                if (it == cells[fam].end()) {
                    md += " - |";
                    csv += ",-";
                } else {
                    std::string v = fmt4(it->second);
                    md += " " + v + " |";
                    csv += "," + v;
                    col_sum[c].first += it->second;
                    col_sum[c].second += 1;
                }
            }
            md += "\n";
            csv += "\n";
        }
        md += "| average |";
        csv += "average";
        for (const std::string& c : cols) {
            auto [sum, cnt] = col_sum[c];
            std::string v = cnt ? fmt4(sum / cnt) : "-";
            md += " " + v + " |";
            csv += "," + v;
        }
        md += "\n";
        csv += "\n\n";
    }

    md += "\n## rows\n\n| manipulation | image_size | n_bits | embed_level | fmrr | "
          "bit_accuracy | psnr_db | ssim | n_images |\n"
          "| --- | ---: | ---: | --- | ---: | ---: | ---: | ---: | ---: |\n";
    csv += "# rows\nmanipulation,image_size,n_bits,embed_level,fmrr,bit_accuracy,psnr_db,ssim,"
           "n_images\n";
    for (const EvalRow& r : rows) {
        std::string size = std::to_string(r.image_size);
        std::string bits = std::to_string(r.n_bits);
        std::string level = embed_level_name(r.embed_level);
        std::string f = fmt4(r.fmrr), a = fmt4(r.bit_accuracy);
        std::string p = psnr_str(r.psnr_db), s = fmt4(r.ssim);
        std::string n = std::to_string(r.n_images);
        md += "| " + r.manipulation + " | " + size + " | " + bits + " | " + level + " | " + f +
              " | " + a + " | " + p + " | " + s + " | " + n + " |\n";
        csv += r.manipulation + "," + size + "," + bits + "," + level + "," + f + "," + a + "," +
               p + "," + s + "," + n + "\n";
    }
    return {md, csv};
}

void write_report(const std::string& out_dir, const std::vector<EvalRow>& rows) {
    Report rep = render_report(rows);
    fs::create_directories(out_dir);
    auto emit = [&](const char* name, const std::string& text) {
        std::string path = (fs::path(out_dir) / name).string();
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw IoError("cannot write " + path);
        f << text;
        if (!f.good()) throw IoError("failed while writing " + path);
    };
    emit("report.md", rep.markdown);
    emit("rows.csv", rep.csv);
}

}  // namespace tagkit
