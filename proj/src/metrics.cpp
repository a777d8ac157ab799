#include "dksg/metrics.hpp"

#include <cstdio>
#include <stdexcept>

namespace dksg {

namespace {

double ratio(double num, double den) { return den == 0.0 ? 1.0 : num / den; }

void require_binary(const Tensor& t, const char* what) {
    const auto& a = t.array();
    for (int64_t i = 0; i < t.numel(); ++i)
        if (a(i) != 0.0f && a(i) != 1.0f)
            throw std::invalid_argument(std::string("confusion: ") + what + " is not binary");
}

}  // namespace

Tensor binarize(const Tensor& logits, float threshold) {
    Tensor out(logits.shape());
    const auto& in = logits.array();
    auto& a = out.mutable_array();
    for (int64_t i = 0; i < logits.numel(); ++i) a(i) = in(i) > threshold ? 1.0f : 0.0f;
    return out;
}

ConfusionCounts confusion(const Tensor& pred, const Tensor& truth) {
    if (pred.shape() != truth.shape())
        throw std::invalid_argument("confusion: pred and truth shapes differ");
    if (pred.numel() == 0) throw std::invalid_argument("confusion: empty input");
    require_binary(pred, "pred");
    require_binary(truth, "truth");

    ConfusionCounts c;
    const auto& p = pred.array();
    const auto& t = truth.array();
    for (int64_t i = 0; i < pred.numel(); ++i) {
        if (p(i) == 1.0f)
            (t(i) == 1.0f ? c.tp : c.fp)++;
        else
            (t(i) == 1.0f ? c.fn : c.tn)++;
    }
    return c;
}

ConfusionCounts merge(const ConfusionCounts& a, const ConfusionCounts& b) {
    return {a.tp + b.tp, a.fp + b.fp, a.tn + b.tn, a.fn + b.fn};
}

MetricReport report(const ConfusionCounts& c) {
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
    MetricReport r;
    r.recall = ratio(tp, tp + fn);
    r.spec = ratio(tn, tn + fp);
    r.prec = ratio(tp, tp + fp);
    r.dice = ratio(2.0 * tp, 2.0 * tp + fp + fn);
    r.iou_p = ratio(tp, tp + fp + fn);
    r.iou_b = ratio(tn, tn + fp + fn);
    r.miou = (r.iou_p + r.iou_b) / 2.0;
    r.acc = ratio(tp + tn, tp + fp + tn + fn);
    return r;
}

MetricReport average(const std::vector<MetricReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("metrics: nothing to average");
    MetricReport m;
    for (const auto& r : reports) {
        m.recall += r.recall;
        m.spec += r.spec;
        m.prec += r.prec;
        m.dice += r.dice;
        m.iou_p += r.iou_p;
        m.iou_b += r.iou_b;
        m.miou += r.miou;
        m.acc += r.acc;
    }
    const double n = static_cast<double>(reports.size());
    m.recall /= n;
    m.spec /= n;
    m.prec /= n;
    m.dice /= n;
    m.iou_p /= n;
    m.iou_b /= n;
    m.miou /= n;
    m.acc /= n;
    return m;
}

void write_metrics_csv(std::ostream& os, const std::vector<std::string>& ids,
                       const std::vector<MetricReport>& reports, const MetricReport& mean,
                       const std::string& mean_label) {
    if (ids.size() != reports.size())
        throw std::invalid_argument("metrics csv: ids and reports length mismatch");
    os << "id,recall,spec,prec,dice,iou_p,iou_b,miou,acc\n";
    auto row = [&os](const std::string& id, const MetricReport& r) {
        char buf[224];
        std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.recall,
                      r.spec, r.prec, r.dice, r.iou_p, r.iou_b, r.miou, r.acc);
        os << id << buf;
    };
    for (size_t i = 0; i < ids.size(); ++i) row(ids[i], reports[i]);
    row(mean_label, mean);
}

}  // namespace dksg
