#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bgfg/sample.hpp"

namespace bgfg {

/// Pixel counts for one grouping; ignored pixels are never counted.
struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    Counts& operator+=(const Counts& o);
    std::size_t scored() const { return tp + fp + fn + tn; }
    Real precision() const;  // tp/(tp+fp), 0 when undefined
    Real recall() const;     // tp/(tp+fn), 0 when undefined
    /// 2pr/(p+r). A grouping with no foreground anywhere and no false alarm
    /// (tp+fp+fn == 0) is a perfect answer and scores 1.
    Real f_measure() const;
};

Counts count_frame(const Mask& mask, const LabelMap& labels);

enum class Level { frame, sequence, category, overall };
std::string to_string(Level l);

struct EvalReport {
    Level level = Level::overall;
    std::string name;
    Counts counts;  // summed over everything below this grouping
    Real precision = 0;
    Real recall = 0;
    Real f_measure = 0;
};

struct FrameResult {
    std::string category;
    std::string sequence;
    std::size_t frame_index = 0;
    Mask mask;
    LabelMap labels;
};

/// Aggregate-then-score over the frames of a single grouping.
EvalReport f_measure(std::span<const Mask> masks, std::span<const LabelMap> labels, Level level = Level::sequence,
                     std::string name = {});

/// Sequence reports score summed counts; category F is the mean of its
/// sequence F values; overall F is the mean of category F values.
struct EvalSummary {
    std::vector<EvalReport> sequences;
    std::vector<EvalReport> categories;
    EvalReport overall;
};

EvalSummary evaluate(std::span<const FrameResult> frames);

void write_report_csv(std::ostream& out, const EvalSummary& s);
void write_report_table(std::ostream& out, const EvalSummary& s);

}  // namespace bgfg
