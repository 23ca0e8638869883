#include "bgfg/evaluation.hpp"

#include <iomanip>
#include <ostream>

namespace bgfg {

Counts& Counts::operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
}

Real Counts::precision() const { return tp + fp ? Real(tp) / Real(tp + fp) : 0.0; }
Real Counts::recall() const { return tp + fn ? Real(tp) / Real(tp + fn) : 0.0; }

Real Counts::f_measure() const {
    if (tp + fp + fn == 0) return 1.0;
    const Real p = precision(), r = recall();
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

Counts count_frame(const Mask& mask, const LabelMap& labels) {
    if (mask.height != labels.height || mask.width != labels.width)
        throw ShapeError("f_measure: mask " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                         " does not match labels " + std::to_string(labels.height) + "x" + std::to_string(labels.width));
    Counts c;
    for (std::size_t i = 0; i < labels.values.size(); ++i) {
        const auto l = labels.values[i];
        if (l == kIgnore) continue;
        const bool fg = mask.values[i] != 0;
        if (l == kForeground) (fg ? c.tp : c.fn)++;
        else (fg ? c.fp : c.tn)++;
    }
    return c;
}

std::string to_string(Level l) {
    switch (l) {
        case Level::frame: return "frame";
        case Level::sequence: return "sequence";
        case Level::category: return "category";
        case Level::overall: return "overall";
    }
    return "?";
}

namespace {

EvalReport scored(Level level, std::string name, const Counts& c) {
    return {level, std::move(name), c, c.precision(), c.recall(), c.f_measure()};
}

// Mean-of-F report over child groupings; counts are still summed for reference.
EvalReport averaged(Level level, std::string name, std::span<const EvalReport> children) {
    EvalReport r{level, std::move(name), {}, 0, 0, 0};
    for (const auto& c : children) {
        r.counts += c.counts;
        r.precision += c.precision;
        r.recall += c.recall;
        r.f_measure += c.f_measure;
    }
    const Real n = Real(children.size());
    r.precision /= n;
    r.recall /= n;
    r.f_measure /= n;
    return r;
}

}  // namespace

EvalReport f_measure(std::span<const Mask> masks, std::span<const LabelMap> labels, Level level, std::string name) {
    if (masks.size() != labels.size())
        throw ShapeError("f_measure: " + std::to_string(masks.size()) + " masks for " + std::to_string(labels.size()) +
                         " label maps");
    Counts total;
    for (std::size_t i = 0; i < masks.size(); ++i) total += count_frame(masks[i], labels[i]);
    if (total.scored() == 0) throw DataError("f_measure: no scorable pixels");
    return scored(level, std::move(name), total);
}

EvalSummary evaluate(std::span<const FrameResult> frames) {
    // category -> sequence -> counts, both ordered by name
    std::map<std::string, std::map<std::string, Counts>> tree;
    for (const auto& f : frames) tree[f.category][f.sequence] += count_frame(f.mask, f.labels);

    EvalSummary s;
    for (const auto& [category, sequences] : tree) {
        std::vector<EvalReport> seq_reports;
        for (const auto& [sequence, counts] : sequences) {
            if (counts.scored() == 0) continue;
            seq_reports.push_back(scored(Level::sequence, category + "/" + sequence, counts));
        }
        if (seq_reports.empty()) continue;
        s.categories.push_back(averaged(Level::category, category, seq_reports));
        s.sequences.insert(s.sequences.end(), seq_reports.begin(), seq_reports.end());
    }
    if (s.categories.empty()) throw DataError("f_measure: no scorable pixels");
    s.overall = averaged(Level::overall, "overall", s.categories);
    return s;
}

void write_report_csv(std::ostream& out, const EvalSummary& s) {
    out << "level,name,tp,fp,fn,precision,recall,f_measure\n" << std::setprecision(10);
    auto row = [&](const EvalReport& r) {
        out << to_string(r.level) << ',' << r.name << ',' << r.counts.tp << ',' << r.counts.fp << ',' << r.counts.fn
            << ',' << r.precision << ',' << r.recall << ',' << r.f_measure << '\n';
    };
    for (const auto& r : s.sequences) row(r);
    for (const auto& r : s.categories) row(r);
    row(s.overall);
}

void write_report_table(std::ostream& out, const EvalSummary& s) {
    out << std::left << std::setw(32) << "grouping" << std::right << std::setw(11) << "precision" << std::setw(11)
        << "recall" << std::setw(11) << "F" << '\n'
        << std::fixed << std::setprecision(4);
    auto row = [&](const EvalReport& r, const char* indent) {
        out << std::left << std::setw(32) << (indent + r.name) << std::right << std::setw(11) << r.precision
            << std::setw(11) << r.recall << std::setw(11) << r.f_measure << '\n';
    };
    for (const auto& c : s.categories) {
        row(c, "");
        for (const auto& q : s.sequences)
            if (q.name.starts_with(c.name + "/")) row(q, "  ");
    }
    row(s.overall, "");
    out.unsetf(std::ios::fixed);
}

}  // namespace bgfg
