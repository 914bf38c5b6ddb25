#include "idprior/cli/app.hpp"
#include "idprior/cli/config.hpp"
#include "idprior/core/digest.hpp"
#include "idprior/core/errors.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace idprior;
using namespace idprior::cli;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(# tiny model and corpus
model.encoder_layers = 2
model.encoder_dim = 16
model.decoder_layers = 1
model.decoder_dim = 16
model.heads = 2
data.identities = 2
data.real_train = 4
data.forged_train = 4
data.real_test = 2
data.forged_test = 2
data.generic_identities = 2
data.generic_real = 2
data.generic_forged = 2
train.pretrain_steps = 4
train.pretrain_batch = 2
train.stage1_steps = 3
train.epochs_stage2 = 1
train.max_new_tokens = 8
)";

struct Result {
    int code;
    std::string out, err;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("idprior_cli_" + std::string(info->name()) + "_" + std::to_string(getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        std::ofstream(dir_ / "tiny.cfg") << kTiny;
    }
    void TearDown() override { fs::remove_all(dir_); }

    Result run(std::vector<std::string> args, const std::string& out = "run") {
        args.insert(args.end(), {"--config", (dir_ / "tiny.cfg").string(), "--out", (dir_ / out).string()});
        std::ostringstream o, e;
        const int code = cli::run(args, o, e);
        return {code, o.str(), e.str()};
    }

    std::string slurp(const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        std::ostringstream s;
        s << f.rdbuf();
        return s.str();
    }

    fs::path dir_;
};

}  // namespace

TEST(Settings, ParsesCommentsAndBlankLines) {
    const auto s = parse_settings("# header\n\n model.heads = 2 # trailing\ntrain.lambda1=0.5\n");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.at("model.heads"), "2");
    EXPECT_EQ(s.at("train.lambda1"), "0.5");
}

TEST(Settings, RejectsMalformedInput) {
    EXPECT_THROW(parse_settings("model.heads 2\n"), ConfigError);
    EXPECT_THROW(parse_settings("a.b = 1\na.b = 2\n"), ConfigError);
    auto cfg = evaluation::ExperimentConfig::benchmark();
    EXPECT_THROW(apply_setting(cfg, "model.nope", "1"), ConfigError);
    EXPECT_THROW(apply_setting(cfg, "heads", "1"), ConfigError);
    EXPECT_THROW(apply_setting(cfg, "model.heads", "two"), ConfigError);
    EXPECT_THROW(apply_setting(cfg, "model.heads", "2.5"), ConfigError);
    EXPECT_THROW(apply_setting(cfg, "adapter.zero_init", "maybe"), ConfigError);
    EXPECT_THROW(apply_setting(cfg, "eval.positive_class", "both"), Error);
}

TEST(Settings, AppliesTypedValues) {
    auto cfg = evaluation::ExperimentConfig::benchmark();
    apply_settings(cfg, parse_settings("model.heads = 2\ntrain.lambda2 = 0.25\nadapter.zero_init = false\n"
                                       "data.forged_test = 7\neval.positive_class = real\nidentity.n_soft = 3\n"));
    EXPECT_EQ(cfg.model.heads, 2);
    EXPECT_EQ(cfg.train.lambda2, 0.25);
    EXPECT_FALSE(cfg.adapter.zero_init);
    EXPECT_EQ(cfg.data.quota.forged_test, 7);
    EXPECT_EQ(cfg.positive_class, evaluation::PositiveClass::real);
    EXPECT_EQ(cfg.n_soft, 3);
}

TEST(Settings, RenderRoundTrips) {
    auto cfg = evaluation::ExperimentConfig::benchmark();
    cfg.train.learning_rate = 0.0123;
    cfg.data.seed = 42;
    const std::string text = render_settings(cfg);
    evaluation::ExperimentConfig back;
    apply_settings(back, parse_settings(text));
    EXPECT_EQ(render_settings(back), text);
    EXPECT_EQ(back.train, cfg.train);
}

TEST(Settings, Fractions) {
    EXPECT_EQ(parse_fractions("0.05, 0.1,1"), (std::vector<double>{0.05, 0.1, 1.0}));
    EXPECT_THROW(parse_fractions("0.5,0"), ArgumentError);
    EXPECT_THROW(parse_fractions("abc"), ArgumentError);
}

TEST_F(Cli, DryRunPrintsResolvedConfigWithoutWriting) {
    const auto r = run({"train-adapter", "--dry-run", "--seed", "7", "--set", "train.lambda1=2"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("train.seed = 7"), std::string::npos);
    EXPECT_NE(r.out.find("data.seed = 7"), std::string::npos);
    EXPECT_NE(r.out.find("train.lambda1 = 2"), std::string::npos);
    EXPECT_NE(r.out.find("model.heads = 2"), std::string::npos);  // from the file
    EXPECT_FALSE(fs::exists(dir_ / "run"));
}

TEST_F(Cli, FlagsOverrideFile) {
    const auto r = run({"prepare-data", "--dry-run", "--identities", "3", "--n-real", "1", "--positive-class", "real"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("data.identities = 3"), std::string::npos);
    EXPECT_NE(r.out.find("data.real_train = 1"), std::string::npos);
    EXPECT_NE(r.out.find("eval.positive_class = real"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
    std::ostringstream o, e;
    EXPECT_EQ(cli::run({"bogus"}, o, e), 2);
    EXPECT_EQ(e.str().rfind("error: argument: ", 0), 0u);
    std::ostringstream o2, e2;
    EXPECT_EQ(cli::run({}, o2, e2), 2);
}

TEST_F(Cli, PrepareDataRefusesNonEmptyOutput) {
    ASSERT_EQ(run({"prepare-data"}).code, 0);
    const auto again = run({"prepare-data"});
    EXPECT_EQ(again.code, 1);
    EXPECT_EQ(again.err.rfind("error: argument: ", 0), 0u);
    EXPECT_EQ(std::count(again.err.begin(), again.err.end(), '\n'), 1);
    EXPECT_EQ(run({"prepare-data", "--force"}).code, 0);
}

TEST_F(Cli, MinimalCorpus) {
    const auto r = run({"prepare-data", "--identities", "1", "--n-real", "1", "--n-forged-train", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("identities 1"), std::string::npos);
    EXPECT_NE(r.out.find("train 2 (real 1, forged 1)"), std::string::npos);
}

TEST_F(Cli, SameSeedGivesByteIdenticalData) {
    ASSERT_EQ(run({"prepare-data", "--seed", "3"}, "a").code, 0);
    ASSERT_EQ(run({"prepare-data", "--seed", "3"}, "b").code, 0);
    for (const char* f : {"data/targets.jsonl", "data/generic.jsonl", "data/identities.jsonl", "run_manifest.json"})
        EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
    ASSERT_EQ(run({"prepare-data", "--seed", "4"}, "c").code, 0);
    EXPECT_NE(slurp(dir_ / "a/data/targets.jsonl"), slurp(dir_ / "c/data/targets.jsonl"));
}

TEST_F(Cli, StageTwoNeedsStageOneCheckpoint) {
    ASSERT_EQ(run({"prepare-data"}).code, 0);
    const auto r = run({"train-identity"});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("error: prerequisite: stage-1 checkpoint required", 0), 0u) << r.err;
}

TEST_F(Cli, MissingCorpusIsNamed) {
    const auto r = run({"train-adapter"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("corpus manifest required"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("generic.jsonl"), std::string::npos);
}

TEST_F(Cli, PipelineMatchesInMemoryAblation) {
    ASSERT_EQ(run({"prepare-data"}).code, 0);
    ASSERT_EQ(run({"train-adapter"}).code, 0);
    const auto ti = run({"train-identity"});
    ASSERT_EQ(ti.code, 0) << ti.err;
    // 4 + 4 train records x 3 task kinds, batch 2, 1 epoch.
    for (const char* id : {"person00", "person01"}) {
        const std::string log = slurp(dir_ / "run/logs/full" / (std::string(id) + ".jsonl"));
        EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 12) << id;
    }
    const auto ev = run({"evaluate"});
    ASSERT_EQ(ev.code, 0) << ev.err;
    EXPECT_NE(ev.out.find("variant"), std::string::npos);
    const auto ab = run({"ablate"});
    ASSERT_EQ(ab.code, 0) << ab.err;
    for (const char* v : {"full", "no_adapter", "no_decoupled_tokens", "no_cot"})
        EXPECT_NE(ab.out.find(std::string("\n") + v + " "), std::string::npos) << v;
    EXPECT_EQ(slurp(dir_ / "run/reports/full/predictions.jsonl"),
              slurp(dir_ / "run/reports/ablation/full.predictions.jsonl"));

    const auto manifest = nlohmann::json::parse(slurp(dir_ / "run/run_manifest.json"));
    int checked = 0;
    for (const auto& f : manifest.at("files")) {
        EXPECT_EQ(f.at("sha256").get<std::string>(), sha256_file(dir_ / "run" / f.at("path").get<std::string>()));
        ++checked;
    }
    EXPECT_GT(checked, 10);

    const std::string preds = slurp(dir_ / "run/reports/full/predictions.jsonl");
    const auto first = nlohmann::json::parse(preds.substr(0, preds.find('\n')));
    const auto ex = run({"explain", "--sample", first.at("sample_id").get<std::string>()});
    ASSERT_EQ(ex.code, 0) << ex.err;
    ASSERT_EQ(std::count(ex.out.begin(), ex.out.end(), '\n'), 2);
    EXPECT_EQ(ex.out.substr(0, ex.out.find('\n')), first.at("raw_text").get<std::string>());
    const std::string last = ex.out.substr(ex.out.find('\n') + 1);
    EXPECT_TRUE(last == "Yes\n" || last == "No\n" || last == "unparsed\n") << last;

    const auto missing = run({"explain", "--sample", "nobody_real_000"});
    EXPECT_EQ(missing.code, 1);
    EXPECT_NE(missing.err.find("not in the manifest"), std::string::npos);
    const auto untrained = run({"evaluate", "--variant", "no_cot"});
    EXPECT_EQ(untrained.code, 1);
    EXPECT_EQ(untrained.err.rfind("error: prerequisite: identity checkpoint", 0), 0u) << untrained.err;
}

TEST_F(Cli, SweepRows) {
    ASSERT_EQ(run({"prepare-data"}).code, 0);
    ASSERT_EQ(run({"train-adapter"}).code, 0);
    const auto r = run({"sweep", "--fractions", "0.5,1.0"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("\n50% "), std::string::npos);
    EXPECT_NE(r.out.find("\n100% "), std::string::npos);
    const auto bad = run({"sweep", "--fractions", "0.1"});
    EXPECT_EQ(bad.code, 1);
    EXPECT_EQ(bad.err.rfind("error: evaluation: ", 0), 0u) << bad.err;
}
