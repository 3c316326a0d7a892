#pragma once

#include "slm/distributions.hpp"
#include "slm/sensing.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace slm {

/// One-pass supplier of mini-batches. Every instance handed out is counted
/// in consumed(); nothing is ever replayed.
class BatchSource {
public:
    virtual ~BatchSource() = default;

    /// Next batch of n fresh instances, or nullopt once the budget is spent.
    std::optional<MiniBatch> next(Index n);

    Index consumed() const noexcept { return consumed_; }
    Index batches() const noexcept { return batches_; }

protected:
    virtual std::optional<MiniBatch> produce(Index n) = 0;

private:
    Index consumed_ = 0;
    Index batches_ = 0;
};

/// Synthetic stream from a planted model. Batch b of trial t is drawn from
/// its own substream (seed, train, t, b), so batch contents do not depend on
/// how many threads generate trials or on the batch sizes requested before.
class SyntheticSource final : public BatchSource {
public:
    SyntheticSource(DistributionSpec spec, GroundTruth gt, std::uint64_t seed, std::uint64_t trial,
                    Index budget = std::numeric_limits<Index>::max());

    const GroundTruth& ground_truth() const noexcept { return gt_; }

protected:
    std::optional<MiniBatch> produce(Index n) override;

private:
    DistributionSpec spec_;
    GroundTruth gt_;
    std::uint64_t seed_;
    std::uint64_t trial_;
    Index budget_;
    Index handed_out_ = 0;
    std::uint64_t next_index_ = 0;
};

/// Replays a fixed list of batches once, in order (tests, injected data).
class ListSource final : public BatchSource {
public:
    explicit ListSource(std::vector<MiniBatch> batches) : batches_(std::move(batches)) {}

protected:
    std::optional<MiniBatch> produce(Index n) override;

private:
    std::vector<MiniBatch> batches_;
    std::size_t cursor_ = 0;
};

/// Per-iteration metrics shared by the MES and GD runners. Fields that were
/// not measured stay NaN.
struct TraceRecord {
    Index step = 0;
    double beta = std::numeric_limits<double>::quiet_NaN();
    double gamma = std::numeric_limits<double>::quiet_NaN();
    double eps = std::numeric_limits<double>::quiet_NaN();
    double test_nmse = std::numeric_limits<double>::quiet_NaN();
    double train_residual = std::numeric_limits<double>::quiet_NaN();
    double wall_ms = 0.0;
    std::string flags;  // ';'-separated tokens

    void add_flag(std::string_view flag);
    bool has_flag(std::string_view flag) const;
};

}  // namespace slm
