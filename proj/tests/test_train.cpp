#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dksg/eval.hpp"
#include "dksg/synth.hpp"
#include "dksg/train.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace dksg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::path("/tmp") / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.batch_size = 4;
    cfg.image_size = 32;
    cfg.epochs = 2;
    cfg.seed = 42;
    cfg.model.channels = {4, 4, 6, 6, 8};
    cfg.model.blocks_per_stage = 1;
    cfg.model.c_d = 4;
    cfg.model.d_model = 8;
    return cfg;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string l;
    while (std::getline(is, l)) out.push_back(l);
    return out;
}

}  // namespace

TEST_CASE("a tiny training run produces the full artifact set with a well-formed log") {
    TempDir data("dksg_train_data"), out("dksg_train_out");
    SyntheticSpec spec;
    spec.count = 12;
    spec.image_size = 32;
    spec.seed = 3;
    generate_synthetic(spec, data.path.string());

    RunConfig cfg = tiny_config();
    TrainArtifacts art = train_model(cfg, data.path.string(), out.path.string());

    CHECK(fs::exists(art.best_checkpoint));
    CHECK(fs::exists(art.init_checkpoint));
    CHECK(fs::exists(art.log_csv));
    CHECK(fs::exists(art.val_ids_path));
    CHECK(art.steps == 2 * 3);  // 10 train samples, batch 4 -> 3 steps/epoch

    auto log = lines_of(read_bytes(art.log_csv));
    REQUIRE(log.size() == 4);  // header + baseline + 2 epochs
    CHECK(log[0] == "epoch,step,lr,train_loss,val_dice");
    CHECK(log[1].substr(0, 4) == "0,0,");
    CHECK(log[1].find("0.00040000") != std::string::npos);  // lr(0) exactly
    for (size_t i = 1; i < log.size(); ++i) {
        int epoch = -1;
        long long step = -1;
        double lr = -1, tl = -1, vd = -1;
        REQUIRE(std::sscanf(log[i].c_str(), "%d,%lld,%lf,%lf,%lf", &epoch, &step, &lr, &tl,
                            &vd) == 5);
        CHECK(epoch == static_cast<int>(i) - 1);
        CHECK(lr >= 0.0);
        CHECK(tl > 0.0);
        CHECK(vd >= 0.0);
        CHECK(vd <= 1.0);
    }

    auto val_ids = lines_of(read_bytes(art.val_ids_path));
    CHECK(val_ids.size() == 2);  // 20% of 12, rounded

    // the best checkpoint reloads and evaluates cleanly on the val samples
    SegModel best = SegModel::load(art.best_checkpoint);
    std::vector<Sample> ds;
    for (const auto& s : load_dataset(data.path.string())) ds.push_back(s);
    EvalResult ev = evaluate(best, ds, 32);
    CHECK(ev.per_image.size() == 12);
    CHECK(ev.mean.dice >= 0.0);
    CHECK(ev.mean.dice <= 1.0);
    CHECK(ev.pooled.acc >= 0.0);
}

TEST_CASE("identical seeds give byte-identical checkpoints and logs") {
    TempDir data("dksg_det_data"), out1("dksg_det_out1"), out2("dksg_det_out2");
    SyntheticSpec spec;
    spec.count = 10;
    spec.image_size = 32;
    spec.seed = 8;
    generate_synthetic(spec, data.path.string());

    RunConfig cfg = tiny_config();
    cfg.epochs = 1;
    train_model(cfg, data.path.string(), out1.path.string());
    train_model(cfg, data.path.string(), out2.path.string());

    for (const char* f : {"checkpoint.dksg", "checkpoint_init.dksg", "train_log.csv",
                          "val_ids.txt"}) {
        INFO(f);
        std::string a = read_bytes((out1.path / f).string());
        CHECK(!a.empty());
        CHECK(a == read_bytes((out2.path / f).string()));
    }

    // a different seed diverges
    cfg.seed = 43;
    TempDir out3("dksg_det_out3");
    train_model(cfg, data.path.string(), out3.path.string());
    CHECK(read_bytes((out1.path / "checkpoint.dksg").string()) !=
          read_bytes((out3.path / "checkpoint.dksg").string()));
}

TEST_CASE("training rejects impossible setups") {
    TempDir data("dksg_train_bad");
    SyntheticSpec spec;
    spec.count = 2;  // 80/20 of 2 leaves an empty val side after rounding? no: 2 -> 2/0
    spec.image_size = 32;
    generate_synthetic(spec, data.path.string());
    RunConfig cfg = tiny_config();
    CHECK_THROWS(train_model(cfg, data.path.string(), (data.path / "out").string()));
    CHECK_THROWS(train_model(cfg, "/tmp/dksg_no_such_dir", (data.path / "out").string()));
}
