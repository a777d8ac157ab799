#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dksg/config.hpp"
#include "dksg/data.hpp"
#include "dksg/eval.hpp"
#include "dksg/metrics.hpp"
#include "dksg/model.hpp"
#include "dksg/ops.hpp"
#include "dksg/pnm.hpp"
#include "dksg/selfcheck.hpp"
#include "dksg/selftest.hpp"
#include "dksg/synth.hpp"
#include "dksg/train.hpp"

namespace {

// DKSG_THREADS caps worker threads. Every code path here is single-threaded,
// so the cap is only validated; 1 is both the default and the effective value.
int env_threads() {
    const char* v = std::getenv("DKSG_THREADS");
    if (!v || !*v) return 1;
    char* end = nullptr;
    long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1)
        throw std::runtime_error("DKSG_THREADS must be a positive integer, got '" +
                                 std::string(v) + "'");
    return static_cast<int>(n);
}

int run_gen_data(int count, int size, uint64_t seed, const std::string& out) {
    dksg::SyntheticSpec spec;
    spec.count = count;
    spec.image_size = size;
    spec.seed = seed;
    dksg::SynthStats st = dksg::generate_synthetic(spec, out);
    std::printf("wrote %d samples (%dx%d) to %s, mean foreground fraction %.4f\n", st.count, size,
                size, out.c_str(), st.mean_fg_fraction);
    return 0;
}

int run_train(const std::string& config, const std::string& data, const std::string& out) {
    dksg::RunConfig cfg = dksg::load_config(config);
    dksg::TrainArtifacts art = dksg::train_model(cfg, data, out, &std::cout);
    std::printf("done: best validation dice %.4f after %lld steps\n", art.best_val_dice,
                static_cast<long long>(art.steps));
    std::printf("checkpoint: %s\nlog: %s\n", art.best_checkpoint.c_str(), art.log_csv.c_str());
    return 0;
}

int run_eval(const std::string& ckpt, const std::string& data, const std::string& out,
             bool pooled) {
    dksg::SegModel model = dksg::SegModel::load(ckpt);
    std::vector<dksg::Sample> samples = dksg::load_dataset(data);
    dksg::EvalResult r = dksg::evaluate(model, samples);
    std::ofstream os(out, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open output csv: " + out);
    const dksg::MetricReport& summary = pooled ? r.pooled : r.mean;
    dksg::write_metrics_csv(os, r.ids, r.per_image, summary, pooled ? "POOLED" : "MEAN");
    std::printf("evaluated %zu images: dice %.4f, miou %.4f (%s)\n", r.ids.size(), summary.dice,
                summary.miou, pooled ? "pooled counts" : "per-image mean");
    return 0;
}

int run_predict(const std::string& ckpt, const std::string& image, const std::string& out,
                const std::string& dump_attn, const std::string& dump_kernel) {
    dksg::SegModel model = dksg::SegModel::load(ckpt);
    dksg::Tensor img = dksg::load_ppm(image);
    const int h = img.dim(1), w = img.dim(2);
    if (h % 32 != 0 || w % 32 != 0)
        throw std::runtime_error("image dimensions must be multiples of 32, got " +
                                 std::to_string(w) + "x" + std::to_string(h));
    dksg::Tensor batch({1, 3, h, w});
    batch.mutable_array() = img.array();
    dksg::ModelOutput mo = model.forward(batch);

    // finest prediction sits at half resolution; bring it back up and threshold
    dksg::Tensor up = dksg::upsample_bilinear(mo.preds[0], 2);
    dksg::Tensor bin = dksg::binarize(up);
    dksg::Tensor mask({1, h, w});
    mask.mutable_array() = bin.array();
    dksg::write_pgm_mask(mask, out);
    double fg = static_cast<double>(mask.array().sum()) / mask.numel();
    std::printf("wrote %dx%d mask to %s (foreground %.2f%%)\n", w, h, out.c_str(), 100.0 * fg);

    if (!dump_attn.empty()) {
        if (mo.attn.numel() == 0)
            throw std::runtime_error("checkpoint has no attention weights (trained with use_ea = false)");
        std::ofstream f(dump_attn, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open output csv: " + dump_attn);
        f << "stage,a1,a2,a3,a4,a5\n";
        for (int i = 0; i < 5; ++i) {
            f << (i + 1);
            for (int j = 0; j < 5; ++j) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), ",%.6f", mo.attn.at(i * 5 + j));
                f << buf;
            }
            f << "\n";
        }
        std::printf("wrote attention weights to %s\n", dump_attn.c_str());
    }

    if (!dump_kernel.empty()) {
        std::ofstream f(dump_kernel, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open output csv: " + dump_kernel);
        f << "stage,mean_gate,l2_kernel\n";
        // kernels walk stages 5..1; gates exist for 4..1 only
        for (int s = 5; s >= 1; --s) {
            const dksg::Tensor& k = mo.kernels[static_cast<size_t>(5 - s)];
            double ss = 0.0;
            for (int i = 0; i < k.numel(); ++i) ss += static_cast<double>(k.at(i)) * k.at(i);
            f << s << ",";
            if (s <= 4) {
                const dksg::Tensor& g = mo.gates[static_cast<size_t>(4 - s)];
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.6f",
                              static_cast<double>(g.array().sum()) / g.numel());
                f << buf;
            }
            char buf[32];
            std::snprintf(buf, sizeof(buf), ",%.6f\n", std::sqrt(ss));
            f << buf;
        }
        std::printf("wrote kernel trajectory to %s\n", dump_kernel.c_str());
    }
    return 0;
}

int run_gradcheck(uint64_t seed) {
    std::vector<dksg::CheckResult> all = dksg::gradcheck_ops(seed);
    std::vector<dksg::CheckResult> e2e = dksg::gradcheck_model(seed);
    all.insert(all.end(), e2e.begin(), e2e.end());
    double worst = 0.0;
    for (const auto& c : all) {
        std::printf("%-28s %.3e\n", c.name.c_str(), c.max_rel_err);
        worst = std::max(worst, c.max_rel_err);
    }
    std::printf("worst relative error %.3e (tolerance 1e-2)\n", worst);
    if (worst > 1e-2) {
        std::cerr << "error: gradient check exceeded tolerance\n";
        return 1;
    }
    return 0;
}

int run_selftest() {
    std::vector<dksg::SelftestResult> results = dksg::selftest_all();
    int failed = 0;
    for (const auto& r : results) {
        std::printf("%s  %s/%s: %s\n", r.pass ? "PASS" : "FAIL", r.group.c_str(), r.name.c_str(),
                    r.detail.c_str());
        failed += r.pass ? 0 : 1;
    }
    std::printf("%zu/%zu checks passed\n", results.size() - static_cast<size_t>(failed),
                results.size());
    if (failed > 0) {
        std::cerr << "error: " << failed << " selftest checks failed\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic-kernel segmentation toolkit"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic ellipse dataset");
    int g_count = 500, g_size = 64;
    uint64_t g_seed = 0;
    std::string g_out;
    gen->add_option("--count", g_count, "number of samples");
    gen->add_option("--size", g_size, "square image size in pixels");
    gen->add_option("--seed", g_seed, "master seed");
    gen->add_option("--out", g_out, "output dataset root")->required();

    auto* train = app.add_subcommand("train", "train a model on a dataset directory");
    std::string t_config, t_data, t_out;
    train->add_option("--config", t_config, "key=value config file")->required();
    train->add_option("--data", t_data, "dataset root (images/ + masks/)")->required();
    train->add_option("--out", t_out, "output directory for checkpoints and logs")->required();

    auto* ev = app.add_subcommand("eval", "score a checkpoint on a dataset");
    std::string e_ckpt, e_data, e_out;
    bool e_pooled = false;
    ev->add_option("--checkpoint", e_ckpt, "model checkpoint")->required();
    ev->add_option("--data", e_data, "dataset root")->required();
    ev->add_option("--out", e_out, "metrics csv path")->required();
    ev->add_flag("--pooled", e_pooled, "summary row from pooled pixel counts instead of per-image mean");

    auto* pred = app.add_subcommand("predict", "segment one image");
    std::string p_ckpt, p_image, p_out, p_attn, p_kernel;
    pred->add_option("--checkpoint", p_ckpt, "model checkpoint")->required();
    pred->add_option("--image", p_image, "input ppm image")->required();
    pred->add_option("--out", p_out, "output pgm mask")->required();
    pred->add_option("--dump-attn", p_attn, "also write the 5x5 attention weights as csv");
    pred->add_option("--dump-kernel", p_kernel, "also write per-stage gate/kernel stats as csv");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    uint64_t c_seed = 7;
    gc->add_option("--seed", c_seed, "seed for random test instances");

    app.add_subcommand("selftest", "built-in oracle, invariant, and metric checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::string msg = e.what();
        for (char& ch : msg)
            if (ch == '\n') ch = ';';
        std::cerr << "error: " << msg << "\n";
        return 1;
    }

    try {
        env_threads();  // validate; all commands run single-threaded
        if (*gen) return run_gen_data(g_count, g_size, g_seed, g_out);
        if (*train) return run_train(t_config, t_data, t_out);
        if (*ev) return run_eval(e_ckpt, e_data, e_out, e_pooled);
        if (*pred) return run_predict(p_ckpt, p_image, p_out, p_attn, p_kernel);
        if (*gc) return run_gradcheck(c_seed);
        return run_selftest();
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (char& ch : msg)
            if (ch == '\n') ch = ';';
        std::cerr << "error: " << msg << "\n";
        return 1;
    }
}
