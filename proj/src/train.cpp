#include "dksg/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "dksg/augment.hpp"
#include "dksg/eval.hpp"
#include "dksg/loss.hpp"
#include "dksg/optim.hpp"
#include "dksg/rng.hpp"

namespace dksg {

namespace {

// named sub-streams off the master seed
constexpr uint64_t kInitStream = 0x696e6974ULL;     // model init
constexpr uint64_t kShuffleStream = 0x73687566ULL;  // per-epoch batch order
constexpr uint64_t kAugmentStream = 0x617567ULL;    // per-epoch augmentation

void stack_batch(const std::vector<Sample>& samples, const std::vector<size_t>& order,
                 size_t begin, size_t end, Tensor& images, Tensor& masks) {
    const int b = static_cast<int>(end - begin);
    const int h = samples[order[begin]].image.dim(1);
    const int w = samples[order[begin]].image.dim(2);
    images = Tensor({b, 3, h, w});
    masks = Tensor({b, 1, h, w});
    auto& ia = images.mutable_array();
    auto& ma = masks.mutable_array();
    for (size_t k = begin; k < end; ++k) {
        const Sample& s = samples[order[k]];
        const int64_t ioff = static_cast<int64_t>(k - begin) * 3 * h * w;
        const int64_t moff = static_cast<int64_t>(k - begin) * h * w;
        for (int64_t i = 0; i < s.image.numel(); ++i) ia(ioff + i) = s.image.at(i);
        for (int64_t i = 0; i < s.mask.numel(); ++i) ma(moff + i) = s.mask.at(i);
    }
}

std::string csv_row(int epoch, int64_t step, float lr, double train_loss, double val_dice) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%lld,%.8f,%.6f,%.6f\n", epoch,
                  static_cast<long long>(step), static_cast<double>(lr), train_loss, val_dice);
    return buf;
}

}  // namespace

TrainArtifacts train_model(const RunConfig& cfg, const std::string& data_root,
                           const std::string& out_dir, std::ostream* progress) {
    namespace fs = std::filesystem;
    cfg.validate();
    fs::create_directories(out_dir);

    std::vector<Sample> raw = load_dataset(data_root);
    std::vector<Sample> data;
    data.reserve(raw.size());
    for (const auto& s : raw) data.push_back(resize_sample(s, cfg.image_size));
    raw.clear();

    auto [train_idx, val_idx] = split_indices(data.size(), 0.8, cfg.seed);
    if (train_idx.empty() || val_idx.empty())
        throw std::runtime_error("train: dataset too small to split 80/20");

    std::vector<Sample> val_set;
    for (size_t i : val_idx) val_set.push_back(data[i]);

    TrainArtifacts art;
    art.best_checkpoint = (fs::path(out_dir) / "checkpoint.dksg").string();
    art.init_checkpoint = (fs::path(out_dir) / "checkpoint_init.dksg").string();
    art.log_csv = (fs::path(out_dir) / "train_log.csv").string();
    art.val_ids_path = (fs::path(out_dir) / "val_ids.txt").string();

    {
        std::ofstream vf(art.val_ids_path, std::ios::trunc);
        for (size_t i : val_idx) vf << data[i].id << "\n";
    }

    SegModel model(cfg.model, derive_seed(cfg.seed, kInitStream));
    model.save(art.init_checkpoint);

    const size_t n_train = train_idx.size();
    const size_t bsz = static_cast<size_t>(cfg.batch_size);
    const int64_t steps_per_epoch = static_cast<int64_t>((n_train + bsz - 1) / bsz);
    OptimConfig ocfg;
    ocfg.lr0 = cfg.lr0;
    ocfg.momentum = cfg.momentum;
    ocfg.weight_decay = cfg.weight_decay;
    ocfg.poly_power = cfg.poly_power;
    ocfg.total_steps = steps_per_epoch * cfg.epochs;
    SgdPoly opt(ocfg);

    std::ofstream log(art.log_csv, std::ios::trunc);
    log << "epoch,step,lr,train_loss,val_dice\n";

    // epoch-0 baseline: untrained loss on the first batch, untrained val Dice
    {
        Tensor images, masks;
        stack_batch(data, train_idx, 0, std::min(bsz, n_train), images, masks);
        Tensor l = total_loss(model.forward(images).preds, masks);
        double dice0 = evaluate(model, val_set).mean.dice;
        art.best_val_dice = dice0;
        log << csv_row(0, 0, opt.lr_at(0), static_cast<double>(l.at(0)), dice0);
        model.save(art.best_checkpoint);  // replaced as soon as an epoch improves on it
        if (progress)
            *progress << "epoch 0 (baseline): val_dice " << dice0 << "\n" << std::flush;
    }

    AugmentToggles toggles{cfg.aug_flip, cfg.aug_rotate, cfg.aug_crop};
    std::vector<size_t> order = train_idx;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, kShuffleStream + static_cast<uint64_t>(epoch)));
        Rng aug_rng(derive_seed(cfg.seed, kAugmentStream + static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        int64_t loss_count = 0;
        for (size_t b = 0; b < n_train; b += bsz) {
            const size_t end = std::min(b + bsz, n_train);
            std::vector<Sample> batch;
            batch.reserve(end - b);
            for (size_t k = b; k < end; ++k) {
                AugmentDecisions d = draw_augment(aug_rng, toggles);
                batch.push_back(apply_augment(data[order[k]], d));
            }
            std::vector<size_t> ident(batch.size());
            for (size_t i = 0; i < batch.size(); ++i) ident[i] = i;
            Tensor images, masks;
            stack_batch(batch, ident, 0, batch.size(), images, masks);

            Tape tape;
            TapeScope scope(tape);
            ParamRegistry reg = model.params();
            reg.watch_all(tape);
            Tensor loss = total_loss(model.forward(images).preds, masks);
            auto grads = tape.backward(loss);
            opt.step(reg, grads);

            loss_sum += static_cast<double>(loss.at(0));
            ++loss_count;
        }

        const double train_loss = loss_sum / static_cast<double>(loss_count);
        const double val_dice = evaluate(model, val_set).mean.dice;
        log << csv_row(epoch, opt.steps_done(), opt.lr_at(opt.steps_done()), train_loss, val_dice);
        if (progress)
            *progress << "epoch " << epoch << "/" << cfg.epochs << ": train_loss " << train_loss
                      << " val_dice " << val_dice << "\n"
                      << std::flush;

        if (val_dice > art.best_val_dice) {
            art.best_val_dice = val_dice;
            model.save(art.best_checkpoint);
        }
    }
    art.steps = opt.steps_done();
    return art;
}

}  // namespace dksg
