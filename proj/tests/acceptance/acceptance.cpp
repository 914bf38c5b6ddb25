// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every selected criterion passes. Optional arguments select criteria by
// number, e.g. `idprior_acceptance 1 2 5`. The lines are also written to
// acceptance_report.txt in the working directory.

#include "idprior/backbone/checkpoint.hpp"
#include "idprior/core/digest.hpp"
#include "idprior/core/errors.hpp"
#include "idprior/evaluation/experiment.hpp"
#include "idprior/training/losses.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

using namespace idprior;
using namespace idprior::training;
using namespace idprior::evaluation;
using data::ManifestRecord;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

// Default-size detector with a random adapter and two registered identities.
struct Bench {
    Detector d{backbone::ModelConfig{}};
    data::SyntheticIdentitySpec a_spec, b_spec;
    std::vector<ManifestRecord> a_train, b_train, generic;
    CacheMap caches;

    explicit Bench(bool zero_adapter) {
        a_spec = data::sample_identity_spec("alice", 11, {});
        b_spec = data::sample_identity_spec("bob", 12, std::vector<data::SyntheticIdentitySpec>{a_spec});
        std::vector<ManifestRecord> all;
        for (auto [spec, train] : {std::pair{&a_spec, &a_train}, {&b_spec, &b_train}}) {
            for (auto& r : data::generate_identity_corpus(*spec, {4, 4, 1, 1}, {}, 21)) {
                if (r.split == data::Split::train) {
                    train->push_back(r);
                    generic.push_back(r);
                }
                all.push_back(std::move(r));
            }
        }
        Rng rng(7);
        adapter::AdapterConfig ac;
        ac.zero_init = zero_adapter;
        d.adapter.emplace(ac, d.model.config(), rng);
        d.registry.register_identity(d.model, "alice", 4, rng);
        d.registry.register_identity(d.model, "bob", 4, rng);
        caches = encode_records(d, all);
    }

    const identity::IdentityProfile& profile(const std::string& id) const { return d.registry.profile(id); }

    std::vector<TaskSample> tasks(const std::string& id) {
        return build_identity_tasks(id == "alice" ? a_train : b_train, profile(id), d.model.vocabulary(),
                                    id == "alice" ? &a_spec : &b_spec, caches, {});
    }
};

TaskBatch of_kind(const std::vector<TaskSample>& tasks, std::size_t n, TaskKind kind) {
    TaskBatch b;
    for (const auto& s : tasks)
        if (s.kind == kind && b.size() < n) b.samples.push_back(s);
    return b;
}

std::string digest_where(const Detector& d, const std::function<bool(const Parameter&)>& keep) {
    std::vector<const Parameter*> ps;
    for (const Parameter* p : d.all_parameters())
        if (keep(*p)) ps.push_back(p);
    return digest_parameters(ps);
}

bool contains(const std::vector<std::string>& names, const std::string& n) {
    return std::find(names.begin(), names.end(), n) != names.end();
}

// --- 1 ----------------------------------------------------------------------

Outcome gradient_oracle() {
    const auto t0 = Clock::now();
    Bench w(false);
    const auto& prof = w.profile("alice");
    const auto tasks = w.tasks("alice");
    std::ostringstream detail;
    bool pass = true;

    auto check = [&](const std::string& family, Parameter& p, const std::vector<Eigen::Index>& coords,
                     const TaskBatch& batch) {
        for (Parameter* q : w.d.all_parameters()) q->zero_grad();
        {
            ag::Tape t;
            t.backward(build_loss(t, w.d, batch, 1.0, 1.0).total);
        }
        auto loss = [&] { return loss_total(w.d, batch, 1.0, 1.0); };
        const auto r = compare_with_oracle(loss, p, coords, 1e-4, 1e-3);
        const bool ok = r.checked == 64 && r.fraction() >= 0.95;
        pass = pass && ok;
        detail << family << " " << r.within << "/" << r.checked << "; ";
    };

    apply_scope(w.d, Scope::theta_prior_only, &prof);
    TaskBatch mixed;
    for (TaskKind k : {TaskKind::appearance, TaskKind::behavior, TaskKind::forgery_cot})
        mixed.samples.push_back(of_kind(tasks, 1, k).samples.at(0));
    Parameter& in = w.d.model.parameters().at(prof.extension.input_param);
    Parameter& out = w.d.model.parameters().at(prof.extension.output_param);
    const int base = prof.extension.start_id;
    const auto cols = in.value.cols();
    std::vector<Eigen::Index> soft, ident, wnew;
    std::vector<int> soft_rows;
    for (int tok : prof.soft_a) soft_rows.push_back(tok - base);
    for (int tok : prof.soft_b) soft_rows.push_back(tok - base);
    for (int row : soft_rows)
        for (int k = 0; k < 8; ++k) soft.push_back(row * cols + (k * 7 + row) % cols);
    for (int row : {prof.id_a_token - base, prof.id_b_token - base})
        for (int k = 0; k < 32; ++k) ident.push_back(row * cols + (k * 2 + row) % cols);
    for (int k = 0; k < 64; ++k) wnew.push_back(((k % 10) * out.value.cols() + (k * 13) % out.value.cols()));
    check("soft", in, soft, mixed);
    check("identifier", in, ident, mixed);
    check("W_new", out, wnew, mixed);

    apply_scope(w.d, Scope::adapter_only);
    TaskBatch verdicts;
    const auto adapter_tasks = build_adapter_tasks(w.generic, w.d.model.vocabulary(), w.caches);
    for (std::size_t i = 0; i < 2; ++i) verdicts.samples.push_back(adapter_tasks.at(i));
    Parameter& proj = w.d.adapter->parameters().at("adapter.proj.w");
    std::vector<Eigen::Index> pc;
    for (int k = 0; k < 64; ++k) pc.push_back((k * 97) % proj.value.size());
    check("adapter.proj", proj, pc, verdicts);

    const double secs = since(t0);
    detail << fmt("%.1fs", secs);
    return {pass && secs < 60.0, detail.str()};
}

// --- 2 ----------------------------------------------------------------------

Outcome vocabulary_noop() {
    Detector d(backbone::ModelConfig{});
    Rng spec_rng(5);
    const auto spec = data::random_identity_spec("carol", spec_rng);
    const auto record = data::render_sample(spec, data::ForgeryFamily::none, 9);
    const auto cache = d.cache(record.raster);
    const auto prompt = d.model.vocabulary().tokenize("describe :");
    const Mat before = d.model.logits(d.context(cache, prompt));
    Rng rng(3);
    const auto& prof = d.registry.register_identity(d.model, "carol", 4, rng);
    const Mat after = d.model.logits(d.context(cache, prompt));
    const int base = d.model.config().base_vocab_size;
    const bool exact = after.cols() == base + 10 && before == after.leftCols(base);
    return {exact && prof.token_count() == 10,
            fmt("%d new tokens, base logits %s", prof.token_count(), exact ? "bit-identical" : "changed")};
}

// --- 3 ----------------------------------------------------------------------

Outcome scope_freezing() {
    std::ostringstream detail;
    bool pass = true;
    {
        Bench w(true);
        auto is_adapter = [](const Parameter& p) { return p.name.rfind("adapter.", 0) == 0; };
        const std::string frozen = digest_where(w.d, [&](const Parameter& p) { return !is_adapter(p); });
        const std::string adapter0 = digest_where(w.d, is_adapter);
        TrainConfig cfg;
        cfg.stage1_steps = 100;
        cfg.stage1_batch = 2;
        const auto r = train_stage1(w.d, build_adapter_tasks(w.generic, w.d.model.vocabulary(), w.caches), cfg);
        const bool ok = r.log.steps.size() == 100 &&
                        digest_where(w.d, [&](const Parameter& p) { return !is_adapter(p); }) == frozen &&
                        digest_where(w.d, is_adapter) != adapter0;
        pass = pass && ok;
        detail << "stage1 " << r.log.steps.size() << " steps " << (ok ? "frozen" : "LEAK") << "; ";
    }
    {
        Bench w(false);
        const auto a_names = identity::collect_theta_prior(w.d.model, w.profile("alice")).names();
        const auto b_names = identity::collect_theta_prior(w.d.model, w.profile("bob")).names();
        auto outside = [&](const Parameter& p) { return !contains(a_names, p.name) && !contains(b_names, p.name); };
        auto of = [&](const std::vector<std::string>& names) {
            return digest_where(w.d, [&](const Parameter& p) { return contains(names, p.name); });
        };
        const std::string frozen = digest_where(w.d, outside);
        const std::string bob0 = of(b_names), alice0 = of(a_names);
        TrainConfig cfg;
        cfg.learning_rate = 1e-2;
        cfg.batch_size = 1;
        cfg.epochs_stage2 = 10;
        auto tasks = w.tasks("alice");
        tasks.resize(10);
        const auto r = train_stage2(w.d, "alice", tasks, cfg);
        const bool frozen_ok = digest_where(w.d, outside) == frozen;
        const bool bob_ok = of(b_names) == bob0;
        const bool alice_moved = of(a_names) != alice0;
        pass = pass && r.log.steps.size() == 100 && frozen_ok && bob_ok && alice_moved;
        detail << "stage2 " << r.log.steps.size() << " steps " << (frozen_ok ? "frozen" : "LEAK") << "; identity B "
               << (bob_ok ? "bit-identical" : "CHANGED");
    }
    return {pass, detail.str()};
}

// --- 4 ----------------------------------------------------------------------

Outcome loss_arithmetic() {
    Bench w(false);
    const auto tasks = w.tasks("alice");
    TaskBatch mixed, verdict, app, beh;
    for (TaskKind k : {TaskKind::appearance, TaskKind::behavior, TaskKind::forgery_cot})
        for (const auto& s : of_kind(tasks, 3, k).samples) mixed.samples.push_back(s);
    for (const auto& s : mixed.samples)
        (s.kind == TaskKind::forgery_cot ? verdict : s.kind == TaskKind::appearance ? app : beh).samples.push_back(s);
    const double a = loss_adapter(w.d, verdict);
    const double pa = loss_appearance(w.d, app, w.profile("alice"));
    const double pb = loss_behavior(w.d, beh, w.profile("alice"));
    double worst = 0.0;
    for (auto [l1, l2] : {std::pair{0.0, 0.0}, {1.0, 1.0}, {2.0, 0.5}})
        worst = std::max(worst, std::abs(loss_total(w.d, mixed, l1, l2) - (a + l1 * pa + l2 * pb)));

    for (const auto* p : w.d.registry.profiles()) w.d.model.parameters().at(p->extension.output_param).value.setZero();
    w.d.model.parameters().at("backbone.dec.out").value.setZero();
    const double vocab = w.d.model.vocab_size();
    const double uniform = loss_adapter(w.d, verdict);
    const double gap = std::abs(uniform - std::log(vocab));
    return {worst <= 1e-6 && gap <= 1e-6,
            fmt("composition max error %.2e at 3 settings; uniform CE %.9f vs ln(%d) %.9f", worst, uniform,
                static_cast<int>(vocab), std::log(vocab))};
}

// --- 5 ----------------------------------------------------------------------

Outcome metrics_oracle() {
    Rng rng(2024);
    int agree = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::uniform_int_distribution<int> n_ids(1, 4), n_pairs(1, 40), pick(0, 2);
        const int ids = n_ids(rng);
        std::vector<Prediction> pairs;
        for (int i = 0, n = n_pairs(rng) * ids; i < n; ++i) {
            Prediction p;
            p.identity_id = "id" + std::to_string(i % ids);
            p.predicted = static_cast<Binary>(pick(rng));
            p.truth = pick(rng) % 2 ? Binary::forged : Binary::real;
            pairs.push_back(p);
        }
        const auto positive = trial % 2 ? PositiveClass::forged : PositiveClass::real;
        const Binary pos = positive == PositiveClass::forged ? Binary::forged : Binary::real;
        // Brute-force recount; unparsed is wrong either way.
        std::map<std::string, std::array<long, 4>> counts;
        for (const auto& p : pairs) {
            auto& c = counts[p.identity_id];
            const bool truth_pos = p.truth == pos;
            const bool correct = p.predicted == p.truth;
            if (truth_pos) ++c[correct ? 0 : 2];
            else ++c[correct ? 3 : 1];
        }
        double f1 = 0, acc = 0, pr = 0, rc = 0;
        for (const auto& [id, c] : counts) {
            const double tp = c[0], fp = c[1], fn = c[2], tn = c[3];
            const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
            const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
            pr += p;
            rc += r;
            f1 += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
            acc += (tp + tn) / (tp + fp + fn + tn);
        }
        const double n = static_cast<double>(counts.size());
        const auto rep = compute_metrics(pairs, positive);
        bool same = rep.macro.f1 == f1 / n && rep.macro.accuracy == acc / n && rep.macro.precision == pr / n &&
                    rep.macro.recall == rc / n && rep.per_identity.size() == counts.size();
        for (const auto& [id, c] : counts) {
            const auto& got = rep.per_identity.at(id);
            same = same && got.tp == c[0] && got.fp == c[1] && got.fn == c[2] && got.tn == c[3];
        }
        agree += same;
    }
    std::vector<Prediction> ex;
    for (auto [pred, truth, n] : {std::tuple{Binary::forged, Binary::forged, 2}, {Binary::forged, Binary::real, 1},
                                  {Binary::real, Binary::forged, 1}, {Binary::real, Binary::real, 2}})
        for (int i = 0; i < n; ++i) ex.push_back({"x", pred, truth});
    const auto m = compute_metrics(ex).macro;
    auto r4 = [](double v) { return std::round(v * 1e4) / 1e4; };
    const bool example = r4(m.accuracy) == 0.6667 && r4(m.precision) == 0.6667 && r4(m.recall) == 0.6667 &&
                         r4(m.f1) == 0.6667;
    return {agree == 1000 && example,
            fmt("%d/1000 exact; example acc %.4f p %.4f r %.4f f1 %.4f", agree, m.accuracy, m.precision, m.recall, m.f1)};
}

// --- 6 / 7 / 8 --------------------------------------------------------------

struct FullRun {
    Foundation foundation;
    std::vector<VariantRun> variants;
    double seconds = 0.0;
};

FullRun full_benchmark(const ExperimentConfig& cfg) {
    const auto t0 = Clock::now();
    FullRun r{build_foundation(cfg), {}, 0.0};
    for (Variant v : kAllVariants) r.variants.push_back(run_variant(r.foundation, v, cfg));
    r.seconds = since(t0);
    return r;
}

Outcome end_to_end(const FullRun& r) {
    std::ostringstream detail;
    const double full = r.variants.front().report.macro.f1;
    bool ordering = true;
    detail << fmt("macro F1 full %.4f", full);
    for (std::size_t i = 1; i < r.variants.size(); ++i) {
        const double f = r.variants[i].report.macro.f1;
        ordering = ordering && full >= f;
        detail << fmt(", %s %.4f", std::string(to_string(r.variants[i].variant)).c_str(), f);
    }
    detail << fmt("; %.1fs", r.seconds);
    return {full >= 0.90 && ordering && r.seconds < 300.0, detail.str()};
}

Outcome data_scale(const FullRun& r, const ExperimentConfig& cfg) {
    const std::vector<double> fractions = {0.05, 0.10, 0.25, 0.50, 0.75, 1.0};
    const auto t0 = Clock::now();
    const auto reports = run_data_scale_sweep(fractions, r.foundation, cfg);
    const double secs = since(t0);
    std::ostringstream detail;
    for (std::size_t i = 0; i < fractions.size(); ++i)
        detail << fmt("%g%% %.4f, ", fractions[i] * 100.0, reports[i].macro.f1);
    detail << fmt("%.1fs", secs);
    return {reports[5].macro.f1 >= reports[1].macro.f1 && secs < 900.0, detail.str()};
}

std::string checkpoint_digest(const Detector& d) {
    backbone::Checkpoint c;
    d.export_to(c);
    return sha256_hex(backbone::serialize_checkpoint(c));
}

// Loss traces, reports and artifact digests of one run, wall times excluded.
std::vector<std::pair<std::string, std::string>> fingerprint(const FullRun& r) {
    std::vector<std::pair<std::string, std::string>> out;
    auto trace = [](const TrainingLog& log) {
        std::string s;
        for (double x : log.loss_trace()) s += fmt("%a,", x);
        return sha256_hex(s);
    };
    out.emplace_back("pretrain trace", trace(r.foundation.pretrain_result.log));
    out.emplace_back("stage1 trace", trace(r.foundation.stage1_result.log));
    out.emplace_back("backbone checkpoint", checkpoint_digest(r.foundation.pretrained));
    out.emplace_back("stage1 checkpoint", checkpoint_digest(r.foundation.adapted));
    for (const auto& v : r.variants) {
        const std::string name(to_string(v.variant));
        for (const auto& [id, res] : v.stage2) out.emplace_back(name + " " + id + " trace", trace(res.log));
        out.emplace_back(name + " checkpoint", checkpoint_digest(v.detector));
        out.emplace_back(name + " report", sha256_hex(v.report.to_json().dump()));
        out.emplace_back(name + " predictions", sha256_hex(predictions_jsonl(v.predictions)));
    }
    return out;
}

Outcome determinism(const FullRun& first, const ExperimentConfig& cfg) {
    const FullRun second = full_benchmark(cfg);
    const auto a = fingerprint(first), b = fingerprint(second);
    std::vector<std::string> differing;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (i >= b.size() || a[i] != b[i]) differing.push_back(a[i].first);
    if (a.size() != b.size()) differing.push_back("artifact count");
    std::string detail = fmt("%zu digests compared", a.size());
    for (const auto& d : differing) detail += "; differs: " + d;
    return {differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    auto wanted = [&](int n) { return only.empty() || only.count(n); };

    std::ofstream file("acceptance_report.txt");
    auto emit = [&](const std::string& line) {
        std::cout << line << std::endl;
        file << line << "\n" << std::flush;
    };
    int failed = 0, ran = 0;
    auto report = [&](int n, const char* name, const std::function<Outcome()>& fn) {
        if (!wanted(n)) return;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        ++ran;
        failed += !o.pass;
        emit("criterion " + std::to_string(n) + " [" + name + "]: " + (o.pass ? "PASS" : "FAIL") + " - " + o.detail);
    };

    report(1, "gradient oracle", gradient_oracle);
    report(2, "vocabulary extension no-op", vocabulary_noop);
    report(3, "scope freezing", scope_freezing);
    report(4, "loss arithmetic", loss_arithmetic);
    report(5, "metrics oracle", metrics_oracle);

    if (wanted(6) || wanted(7) || wanted(8)) {
        const auto cfg = ExperimentConfig::benchmark();
        std::optional<FullRun> run;
        std::string setup_error;
        try {
            run.emplace(full_benchmark(cfg));
        } catch (const std::exception& e) {
            setup_error = e.what();
        }
        auto needs_run = [&](auto fn) {
            return [&, fn]() -> Outcome {
                if (!run) return {false, "benchmark run failed: " + setup_error};
                return fn();
            };
        };
        report(6, "synthetic end-to-end", needs_run([&] { return end_to_end(*run); }));
        report(7, "data-scale trend", needs_run([&] { return data_scale(*run, cfg); }));
        report(8, "determinism", needs_run([&] { return determinism(*run, cfg); }));
    }
    emit("acceptance: " + std::to_string(ran - failed) + "/" + std::to_string(ran) + " passed");
    return failed == 0 ? 0 : 1;
}
