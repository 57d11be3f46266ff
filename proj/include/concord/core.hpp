#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace concord {

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

struct Example {
    std::string id;
    std::vector<double> features;
};

/// A labeled binary sample. Doubles as the empirical distribution that puts
/// mass 1/n on each row.
struct Dataset {
    std::vector<Example> xs;
    std::vector<std::uint8_t> ys;

    std::size_t n() const { return xs.size(); }
};

/// Throws std::invalid_argument if the dataset is empty, rows and labels are
/// misaligned, a label is not 0/1, or an example id repeats.
void validate_dataset(const Dataset& data);

/// An evaluable prediction function. Base models must produce values in [0,1].
using BaseModel = std::function<double(const Example&)>;

/// Per-example predictions aligned to a Dataset. Values are stored raw
/// (patching can push them outside [0,1]); clamped_view selects whether
/// reads clamp to [0,1].
struct PredictionVector {
    std::vector<double> values;
    bool clamped_view = false;

    double at(std::size_t i) const {
        return clamped_view ? clamp01(values[i]) : values[i];
    }
    std::size_t size() const { return values.size(); }
};

PredictionVector evaluate(const BaseModel& f, const Dataset& data);

struct GroupMask {
    std::vector<std::uint8_t> member;

    std::size_t size() const { return member.size(); }
    bool contains(std::size_t i) const { return member[i] != 0; }
    std::size_t count() const;

    static GroupMask none(std::size_t n) { return GroupMask{std::vector<std::uint8_t>(n, 0)}; }
    static GroupMask all(std::size_t n) { return GroupMask{std::vector<std::uint8_t>(n, 1)}; }
};

enum class Direction { gt, lt };

inline const char* to_string(Direction d) { return d == Direction::gt ? "gt" : "lt"; }

/// Points where the two models differ by strictly more than epsilon,
/// partitioned by which model predicts higher. Membership is decided on
/// clamped values (the reported model outputs).
struct DisagreementSplit {
    GroupMask u_all;
    GroupMask u_gt;   // f1 - f2 > epsilon
    GroupMask u_lt;   // f2 - f1 > epsilon
    double epsilon = 0.0;

    const GroupMask& mask(Direction d) const { return d == Direction::gt ? u_gt : u_lt; }
};

/// Group mass together with the mean label and mean prediction on the group.
/// An empty group yields all-zero stats so vacuous groups never falsify.
struct ViolationStats {
    double mass = 0.0;
    double v_star = 0.0;
    double v_model = 0.0;
    double weighted_violation = 0.0;   // mass * (v_star - v_model)^2
};

/// Mean squared error of preds against the labels, using whichever view
/// (raw or clamped) the vector is set to.
double brier_score(const PredictionVector& preds, const Dataset& data);

double group_mass(const GroupMask& g, const Dataset& data);

DisagreementSplit disagreement_split(const PredictionVector& f1, const PredictionVector& f2,
                                     double epsilon, const Dataset& data);

ViolationStats violation_stats(const PredictionVector& preds, const GroupMask& g,
                               const Dataset& data);

struct GridPoint {
    long k;
    double value;   // k / m
};

/// Nearest point of the signed grid {-m/m, ..., -1/m, 0, 1/m, ..., m/m};
/// ties break toward the smaller k. Requires |v| <= 1 and m >= 1.
GridPoint round_to_grid(double v, long m);

}  // namespace concord
