#include "slm/stream.hpp"

namespace slm {

std::optional<MiniBatch> BatchSource::next(Index n) {
    if (n < 1) throw ConfigError("batch size must be positive", "batch_size");
    auto batch = produce(n);
    if (batch) {
        consumed_ += batch->size();
        ++batches_;
    }
    return batch;
}

SyntheticSource::SyntheticSource(DistributionSpec spec, GroundTruth gt, std::uint64_t seed, std::uint64_t trial,
                                 Index budget)
    : spec_(spec), gt_(std::move(gt)), seed_(seed), trial_(trial), budget_(budget) {
    spec_.validate();
    if (budget_ < 0) throw ConfigError("sample budget must be nonnegative", "total_samples");
}

std::optional<MiniBatch> SyntheticSource::produce(Index n) {
    if (n > budget_ - handed_out_) return std::nullopt;
    Rng rng = make_rng(seed_, {tag(Stream::train), trial_, next_index_++});
    MiniBatch batch;
    batch.x = sample_batch(spec_, gt_.dim(), n, rng);
    batch.y = label_batch(gt_, batch.x, rng);
    handed_out_ += n;
    return batch;
}

std::optional<MiniBatch> ListSource::produce(Index n) {
    if (cursor_ >= batches_.size()) return std::nullopt;
    MiniBatch& b = batches_[cursor_];
    if (b.size() != n) throw DimensionError("ListSource: stored batch size differs from the requested size");
    ++cursor_;
    return std::move(b);
}

void TraceRecord::add_flag(std::string_view flag) {
    if (has_flag(flag)) return;
    if (!flags.empty()) flags += ';';
    flags += flag;
}

bool TraceRecord::has_flag(std::string_view flag) const {
    std::string_view rest = flags;
    while (!rest.empty()) {
        const auto cut = rest.find(';');
        if (rest.substr(0, cut) == flag) return true;
        if (cut == std::string_view::npos) break;
        rest.remove_prefix(cut + 1);
    }
    return false;
}

}  // namespace slm
