#include "dksg/model.hpp"

#include "dksg/checkpoint.hpp"

#include <stdexcept>

namespace dksg {

void ModelConfig::validate() const {
    if (channels.size() != 5)
        throw std::invalid_argument("config: channels must list 5 stage widths");
    for (size_t i = 0; i < 5; ++i) {
        if (channels[i] < 1) throw std::invalid_argument("config: channels must be positive");
        if (i > 0 && channels[i] < channels[i - 1])
            throw std::invalid_argument("config: channels must be nondecreasing");
    }
    if (blocks_per_stage < 0 || blocks_per_stage > 8)
        throw std::invalid_argument("config: blocks_per_stage out of range");
    if (c_d < 1) throw std::invalid_argument("config: c_d must be positive");
    if (d_model < 1) throw std::invalid_argument("config: d_model must be positive");
    if (!use_ea && channels[4] != d_model)
        throw std::invalid_argument(
            "config: with use_ea=false the pooled stage-5 feature feeds the kernel head "
            "directly, so channels[5] must equal d_model (got " +
            std::to_string(channels[4]) + " vs " + std::to_string(d_model) + ")");
}

SegModel::SegModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, 0x6d6f64656cULL));  // one init stream per model
    backbone_ = Backbone(BackboneConfig{cfg_.channels, cfg_.blocks_per_stage}, rng);
    if (cfg_.use_ea) ea_ = EncoderAttention(cfg_.channels, cfg_.d_model, rng);
    decoder_ = Decoder(cfg_.channels, cfg_.c_d, rng);
    head_ = DynKernelHead(cfg_.d_model, cfg_.c_d, rng);
}

ParamRegistry SegModel::params() {
    ParamRegistry r;
    backbone_.reg(r);
    if (cfg_.use_ea) ea_.reg(r);
    decoder_.reg(r);
    head_.reg(r);
    return r;
}

ModelOutput SegModel::forward(const Tensor& image) const {
    std::vector<Tensor> pyramid = backbone_(image);
    Tensor g, attn;
    if (cfg_.use_ea) {
        GlobalContext gc = ea_(pyramid);
        g = gc.g;
        attn = gc.attn;
    } else {
        g = global_avg_pool(pyramid[4]);  // [N, C5] with C5 == d_model
    }
    std::vector<Tensor> dec = decoder_(pyramid);
    DynKernelHead::Output ho = head_.run(g, dec);
    return ModelOutput{std::move(ho.preds), std::move(attn), std::move(ho.kernels),
                       std::move(ho.gates)};
}

void SegModel::save(const std::string& path) {
    std::vector<CheckpointRecord> records;
    ParamRegistry reg = params();  // named: entries point into this model
    for (const auto& e : reg.entries()) records.push_back({e.name, *e.tensor});
    records.push_back({"meta.use_ea", Tensor::full({1}, cfg_.use_ea ? 1.0f : 0.0f)});
    save_checkpoint(path, records);
}

SegModel SegModel::load(const std::string& path) {
    auto records = load_checkpoint(path);
    auto find = [&](const std::string& name) -> const CheckpointRecord* {
        for (const auto& r : records)
            if (r.name == name) return &r;
        return nullptr;
    };
    auto need = [&](const std::string& name) -> const CheckpointRecord& {
        const CheckpointRecord* r = find(name);
        if (!r) throw std::runtime_error("checkpoint: missing record " + name);
        return *r;
    };

    // the architecture is recovered from tensor shapes plus the meta record
    ModelConfig cfg;
    cfg.channels.clear();
    for (int s = 1; s <= 5; ++s)
        cfg.channels.push_back(need("enc.s" + std::to_string(s) + ".down.w").tensor.dim(0));
    cfg.blocks_per_stage = 0;
    while (find("enc.s1.b" + std::to_string(cfg.blocks_per_stage) + ".c1.w"))
        ++cfg.blocks_per_stage;
    cfg.d_model = need("head.phi1.w").tensor.dim(0);
    cfg.c_d = need("head.phi2.w").tensor.dim(1);
    const CheckpointRecord* use_ea = find("meta.use_ea");
    cfg.use_ea = use_ea ? use_ea->tensor.at(0) != 0.0f : find("ea.wq") != nullptr;

    SegModel model(cfg, 0);
    ParamRegistry reg = model.params();
    for (const auto& e : reg.entries()) {
        const CheckpointRecord& rec = need(e.name);
        if (rec.tensor.shape() != e.tensor->shape())
            throw std::runtime_error("checkpoint: " + e.name + " has shape " +
                                     shape_str(rec.tensor.shape()) + ", model expects " +
                                     shape_str(e.tensor->shape()));
        *e.tensor = rec.tensor;
    }
    for (const auto& rec : records)
        if (rec.name.rfind("meta.", 0) != 0 && !reg.find(rec.name))
            throw std::runtime_error("checkpoint: unknown record " + rec.name);
    return model;
}

}  // namespace dksg
