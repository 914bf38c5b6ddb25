#include "idprior/cli/app.hpp"

#include "idprior/backbone/checkpoint.hpp"
#include "idprior/cli/config.hpp"
#include "idprior/core/digest.hpp"
#include "idprior/core/errors.hpp"
#include "idprior/data/attributes.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace idprior::cli {

namespace fs = std::filesystem;
using data::ManifestRecord;
using evaluation::ExperimentConfig;
using evaluation::Variant;
using training::Detector;

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "run";
    bool force = false;
    bool dry_run = false;
    std::vector<std::string> set;
    std::optional<int> identities, n_real, n_forged_train, n_real_test, n_forged_test;
    std::string positive_class;
    std::string variant = "full";
    std::vector<std::string> identity;
    std::string fractions;
    std::string sample;
};

RunConfig resolve(const Flags& f) {
    RunConfig rc;
    auto& e = rc.experiment;
    if (!f.config.empty()) apply_settings(e, read_settings(f.config));
    for (const auto& kv : f.set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ArgumentError("--set expects key=value, got '" + kv + "'");
        auto s = parse_settings(kv);
        apply_settings(e, s);
    }
    if (f.seed) {
        e.data.seed = *f.seed;
        e.train.seed = *f.seed;
        e.model.seed = *f.seed;
    }
    if (f.identities) e.data.identities = *f.identities;
    if (f.n_real) e.data.quota.real_train = *f.n_real;
    if (f.n_forged_train) e.data.quota.forged_train = *f.n_forged_train;
    if (f.n_real_test) e.data.quota.real_test = *f.n_real_test;
    if (f.n_forged_test) e.data.quota.forged_test = *f.n_forged_test;
    if (!f.positive_class.empty()) e.positive_class = evaluation::parse_positive_class(f.positive_class);
    rc.out = f.out;
    rc.force = f.force;
    rc.dry_run = f.dry_run;
    rc.variant = evaluation::parse_variant(f.variant);
    rc.identities = f.identity;
    if (!f.fractions.empty()) rc.fractions = parse_fractions(f.fractions);
    rc.sample = f.sample;
    return rc;
}

// Artifact locations under the run directory.
struct Layout {
    fs::path root;

    fs::path data() const { return root / "data"; }
    fs::path targets() const { return data() / "targets.jsonl"; }
    fs::path generic() const { return data() / "generic.jsonl"; }
    fs::path identities() const { return data() / "identities.jsonl"; }
    fs::path backbone() const { return root / "checkpoints" / "backbone.ckpt"; }
    fs::path stage1() const { return root / "checkpoints" / "stage1.ckpt"; }
    fs::path identity_dir(Variant v) const { return root / "checkpoints" / std::string(evaluation::to_string(v)); }
    fs::path variant_ckpt(Variant v) const { return identity_dir(v) / "detector.ckpt"; }
    fs::path registry(Variant v) const { return identity_dir(v) / "registry.jsonl"; }
    fs::path logs() const { return root / "logs"; }
    fs::path reports() const { return root / "reports"; }
    fs::path manifest() const { return root / "run_manifest.json"; }
};

void require(const fs::path& path, const std::string& what) {
    if (!fs::exists(path)) throw PrerequisiteError(what + " required: " + path.string() + " not found");
}

void write_text(const fs::path& path, std::string_view body) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << body;
}

void write_log(const fs::path& path, const training::TrainingLog& log) {
    write_text(path, log.serialize());
}

std::vector<ManifestRecord> load_corpus(const fs::path& manifest) {
    require(manifest, "corpus manifest");
    auto records = data::read_manifest(manifest);
    const fs::path dir = manifest.parent_path();
    for (auto& r : records) {
        if (r.raster_path.empty()) throw ManifestError("record '" + r.sample_id + "' has no raster path");
        r.raster = read_raster(dir / r.raster_path);
    }
    return records;
}

Detector load_detector(const fs::path& ckpt) { return Detector::import_from(backbone::load_checkpoint(ckpt)); }

Detector load_variant_detector(const Layout& L, Variant v) {
    const std::string vname(evaluation::to_string(v));
    require(L.variant_ckpt(v), "identity checkpoint (" + vname + ", run train-identity)");
    require(L.registry(v), "identity registry (" + vname + ")");
    Detector d = load_detector(L.variant_ckpt(v));
    d.registry = identity::IdentityRegistry::load(L.registry(v), d.model);
    return d;
}

// Train/test records per identity, identities in manifest order.
struct IdentitySplit {
    std::string id;
    std::vector<ManifestRecord> train, test;
};

std::vector<IdentitySplit> by_identity(const std::vector<ManifestRecord>& records,
                                       const std::vector<std::string>& only) {
    const auto all = evaluation::identity_ids(records);
    for (const auto& id : only)
        if (std::find(all.begin(), all.end(), id) == all.end())
            throw ArgumentError("identity '" + id + "' is not in the corpus manifest");
    std::vector<IdentitySplit> out;
    for (const auto& id : all) {
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        IdentitySplit s{id, {}, {}};
        for (const auto& r : records)
            if (r.identity_id == id) (r.split == data::Split::train ? s.train : s.test).push_back(r);
        out.push_back(std::move(s));
    }
    return out;
}

std::string pct(double x) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * x;
    return s.str();
}

// Sorted digests of every file under the run directory.
void write_run_manifest(const Layout& L) {
    std::vector<std::pair<std::string, fs::path>> files;
    for (const auto& e : fs::recursive_directory_iterator(L.root))
        if (e.is_regular_file() && e.path() != L.manifest())
            files.emplace_back(fs::relative(e.path(), L.root).generic_string(), e.path());
    std::sort(files.begin(), files.end());
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [rel, path] : files)
        list.push_back({{"path", rel}, {"bytes", fs::file_size(path)}, {"sha256", sha256_file(path)}});
    write_text(L.manifest(), nlohmann::json{{"files", list}}.dump(2) + "\n");
}

void snapshot_config(const Layout& L, const std::string& command, const RunConfig& rc) {
    write_text(L.root / "config" / (command + ".cfg"), render_settings(rc.experiment));
}

// --- commands --------------------------------------------------------------

void prepare_data(const RunConfig& rc, std::ostream& out) {
    const Layout L{rc.out};
    if (fs::exists(L.root) && !fs::is_empty(L.root)) {
        if (!rc.force) throw ArgumentError("output directory '" + L.root.string() + "' is not empty (use --force)");
        fs::remove_all(L.data());
    }
    auto ds = data::generate_dataset(rc.experiment.data);
    fs::create_directories(L.data() / "rasters");
    for (auto* records : {&ds.target_records, &ds.generic_records})
        for (auto& r : *records) {
            r.raster_path = "rasters/" + r.sample_id + ".idr";
            write_raster(L.data() / r.raster_path, r.raster);
        }
    data::write_manifest(L.targets(), ds.target_records);
    data::write_manifest(L.generic(), ds.generic_records);
    std::string specs;
    for (const auto& s : ds.targets) specs += data::spec_to_json(s).dump() + "\n";
    write_text(L.identities(), specs);

    int counts[2][2] = {};  // [split][label]
    for (const auto& r : ds.target_records)
        ++counts[r.split == data::Split::test][r.label == data::Label::forged];
    out << "identities " << ds.targets.size() << "\n"
        << "train " << counts[0][0] + counts[0][1] << " (real " << counts[0][0] << ", forged " << counts[0][1] << ")\n"
        << "test " << counts[1][0] + counts[1][1] << " (real " << counts[1][0] << ", forged " << counts[1][1] << ")\n"
        << "generic " << ds.generic_records.size() << "\n"
        << "manifest " << L.targets().string() << "\n";
}

void train_adapter(const RunConfig& rc, std::ostream& out) {
    const Layout L{rc.out};
    const auto& e = rc.experiment;
    const auto generic = load_corpus(L.generic());
    e.train.validate();
    e.adapter.validate(e.model);

    Detector d(e.model);
    const auto pre = training::pretrain_backbone(d, e.train);
    backbone::Checkpoint ckpt;
    d.export_to(ckpt);
    backbone::save_checkpoint(L.backbone(), ckpt);
    write_log(L.logs() / "pretrain.jsonl", pre.log);
    out << "pretrain steps " << pre.log.steps.size() << " final loss " << pre.log.steps.back().loss << "\n";

    const auto s1 = evaluation::run_stage1(d, generic, e);
    backbone::Checkpoint ckpt1;
    d.export_to(ckpt1);
    backbone::save_checkpoint(L.stage1(), ckpt1);
    write_log(L.logs() / "stage1.jsonl", s1.log);
    out << "stage1 steps " << s1.log.steps.size() << " probe " << s1.probe_before << " -> " << s1.probe_after << "\n"
        << "checkpoint " << L.stage1().string() << "\n";
}

Detector load_base(const Layout& L, Variant v) {
    if (v == Variant::no_adapter) {
        require(L.backbone(), "backbone checkpoint");
        return load_detector(L.backbone());
    }
    require(L.stage1(), "stage-1 checkpoint");
    return load_detector(L.stage1());
}

void train_identity(const RunConfig& rc, std::ostream& out) {
    const Layout L{rc.out};
    require(L.targets(), "corpus manifest");
    const Detector base = load_base(L, rc.variant);
    const auto records = load_corpus(L.targets());
    std::vector<std::string> ids;
    for (const auto& s : by_identity(records, rc.identities)) ids.push_back(s.id);
    const auto caches = evaluation::encode_records(base, records);
    auto trained = evaluation::train_variant(base, records, ids, caches, rc.experiment, rc.variant);

    backbone::Checkpoint ckpt;
    trained.detector.export_to(ckpt);
    backbone::save_checkpoint(L.variant_ckpt(rc.variant), ckpt);
    trained.detector.registry.save(L.registry(rc.variant));
    const std::string vname(evaluation::to_string(rc.variant));
    for (const auto& id : ids) {
        const auto& log = trained.stage2.at(id).log;
        write_log(L.logs() / vname / (id + ".jsonl"), log);
        out << id << " [" << vname << "] steps " << log.steps.size() << " final loss "
            << (log.steps.empty() ? 0.0 : log.steps.back().loss) << "\n";
    }
}

void evaluate(const RunConfig& rc, std::ostream& out) {
    const Layout L{rc.out};
    const auto records = load_corpus(L.targets());
    const auto splits = by_identity(records, rc.identities);
    const Detector d = load_variant_detector(L, rc.variant);
    std::vector<evaluation::PredictionRecord> preds;
    std::vector<evaluation::Prediction> pairs;
    for (const auto& s : splits) {
        if (!d.registry.contains(s.id))
            throw PrerequisiteError("identity '" + s.id + "' has no trained prior (run train-identity)");
        const auto caches = evaluation::encode_records(d, s.test);
        for (auto& p : evaluation::predict_identity(d, s.id, s.test, caches, rc.experiment.train.max_new_tokens)) {
            pairs.push_back({p.identity_id, p.verdict, p.truth});
            preds.push_back(std::move(p));
        }
    }
    const auto report = evaluation::compute_metrics(pairs, rc.experiment.positive_class);
    const std::string vname(evaluation::to_string(rc.variant));
    const evaluation::NamedReport named{vname, report};
    const auto rendered = evaluation::emit_report(std::span(&named, 1));
    const fs::path dir = L.reports() / vname;
    evaluation::write_report(rendered, dir / "report.txt", dir / "report.csv");
    write_text(dir / "metrics.json", report.to_json().dump(2) + "\n");
    write_text(dir / "predictions.jsonl", evaluation::predictions_jsonl(preds));
    out << rendered.text;
    for (const auto& [id, c] : report.per_identity) out << "  " << id << " F1 " << pct(c.f1()) << "\n";
}

evaluation::Foundation load_foundation(const Layout& L) {
    require(L.backbone(), "backbone checkpoint");
    require(L.stage1(), "stage-1 checkpoint");
    evaluation::Foundation f{{}, load_detector(L.backbone()), load_detector(L.stage1()), {}, {}};
    f.dataset.target_records = load_corpus(L.targets());
    return f;
}

void ablate(const RunConfig& rc, std::ostream& out) {
    const Layout L{rc.out};
    const auto f = load_foundation(L);
    std::vector<evaluation::NamedReport> rows;
    nlohmann::json all = nlohmann::json::object();
    for (Variant v : evaluation::kAllVariants) {
        const auto run = evaluation::run_variant(f, v, rc.experiment);
        const std::string name(evaluation::to_string(v));
        rows.push_back({name, run.report});
        all[name] = run.report.to_json();
        write_text(L.reports() / "ablation" / (name + ".predictions.jsonl"),
                   evaluation::predictions_jsonl(run.predictions));
    }
    const auto rendered = evaluation::emit_report(rows);
    evaluation::write_report(rendered, L.reports() / "ablation" / "report.txt", L.reports() / "ablation" / "report.csv");
    write_text(L.reports() / "ablation" / "metrics.json", all.dump(2) + "\n");
    out << rendered.text;
}

void sweep(const RunConfig& rc, std::ostream& out) {
    const Layout L{rc.out};
    const auto f = load_foundation(L);
    const auto reports = evaluation::run_data_scale_sweep(rc.fractions, f, rc.experiment);
    std::vector<evaluation::NamedReport> rows;
    nlohmann::json all = nlohmann::json::array();
    for (std::size_t i = 0; i < reports.size(); ++i) {
        std::ostringstream label;
        label << rc.fractions[i] * 100.0 << "%";
        rows.push_back({label.str(), reports[i]});
        all.push_back({{"fraction", rc.fractions[i]}, {"report", reports[i].to_json()}});
    }
    const auto rendered = evaluation::emit_report(rows);
    evaluation::write_report(rendered, L.reports() / "sweep" / "report.txt", L.reports() / "sweep" / "report.csv");
    write_text(L.reports() / "sweep" / "metrics.json", all.dump(2) + "\n");
    out << rendered.text;
}

void explain(const RunConfig& rc, std::ostream& out) {
    const Layout L{rc.out};
    if (rc.sample.empty()) throw ArgumentError("--sample is required");
    require(L.targets(), "corpus manifest");
    const auto records = data::read_manifest(L.targets());
    const auto it = std::find_if(records.begin(), records.end(),
                                 [&](const ManifestRecord& r) { return r.sample_id == rc.sample; });
    if (it == records.end()) throw ArgumentError("sample '" + rc.sample + "' is not in the manifest");
    ManifestRecord r = *it;
    r.raster = read_raster(L.data() / r.raster_path);
    const Detector d = load_variant_detector(L, rc.variant);
    if (!d.registry.contains(r.identity_id))
        throw PrerequisiteError("identity '" + r.identity_id + "' has no trained prior (run train-identity)");
    const auto p = evaluation::predict_record(d, r.identity_id, r, d.cache(r.raster), rc.experiment.train.max_new_tokens);
    out << p.raw_text << "\n";
    out << (p.verdict == evaluation::Binary::forged ? "Yes" : p.verdict == evaluation::Binary::real ? "No" : "unparsed")
        << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Identity-prior forgery detection on synthetic avatars"};
    app.require_subcommand(1);
    Flags f;

    using Command = std::function<void(const RunConfig&, std::ostream&)>;
    std::vector<std::tuple<CLI::App*, std::string, Command, bool>> commands;  // app, name, fn, writes

    auto common = [&](CLI::App* c) {
        c->add_option("--config", f.config, "Settings file (section.key = value)");
        c->add_option("--seed", f.seed, "Seed for data, model init and training");
        c->add_option("--out", f.out, "Run directory")->capture_default_str();
        c->add_flag("--force", f.force, "Overwrite an existing corpus");
        c->add_flag("--dry-run", f.dry_run, "Print the resolved config and exit");
        c->add_option("--set", f.set, "Extra setting key=value (repeatable)");
        c->add_option("--identities", f.identities, "Number of target identities");
        c->add_option("--n-real", f.n_real, "Real training images per identity");
        c->add_option("--n-forged-train", f.n_forged_train, "Forged training images per identity");
        c->add_option("--n-real-test", f.n_real_test, "Real test images per identity");
        c->add_option("--n-forged-test", f.n_forged_test, "Forged test images per identity");
        c->add_option("--positive-class", f.positive_class, "forged or real");
    };
    auto add = [&](const std::string& name, const std::string& help, Command fn, bool writes = true) {
        CLI::App* c = app.add_subcommand(name, help);
        common(c);
        commands.emplace_back(c, name, std::move(fn), writes);
        return c;
    };

    add("prepare-data", "Generate identities, corpora and splits", prepare_data);
    add("train-adapter", "Pretrain the backbone and train the detection adapter", train_adapter);
    auto* ti = add("train-identity", "Train identity priors on the stage-1 checkpoint", train_identity);
    ti->add_option("--identity", f.identity, "Identity to train (repeatable, default all)");
    ti->add_option("--variant", f.variant, "full, no_adapter, no_decoupled_tokens or no_cot");
    auto* ev = add("evaluate", "Score trained identities on the test split", evaluate);
    ev->add_option("--variant", f.variant, "Variant whose checkpoints to evaluate");
    ev->add_option("--identity", f.identity, "Restrict to these identities");
    add("ablate", "Train and score all four variants", ablate);
    auto* sw = add("sweep", "Retrain with subsampled identity data", sweep);
    sw->add_option("--fractions", f.fractions, "Comma-separated fractions in (0, 1]");
    auto* ex = add("explain", "Explanation and verdict for one sample", explain, false);
    ex->add_option("--sample", f.sample, "Sample id from the corpus manifest");
    ex->add_option("--variant", f.variant, "Variant whose checkpoint to use");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        const auto subs = app.get_subcommands();
        out << (subs.empty() ? app.help() : subs.front()->help());
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: argument: " << e.what() << "\n";
        return 2;
    }

    try {
        for (auto& [sub, name, fn, writes] : commands) {
            if (!sub->parsed()) continue;
            const RunConfig rc = resolve(f);
            if (rc.dry_run) {
                out << "command = " << name << "\n"
                    << "out = " << rc.out.string() << "\n"
                    << render_settings(rc.experiment);
                return 0;
            }
            fn(rc, out);
            if (writes) {
                const Layout L{rc.out};
                snapshot_config(L, name, rc);
                write_run_manifest(L);
            }
        }
    } catch (const Error& e) {
        err << "error: " << e.category() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace idprior::cli
