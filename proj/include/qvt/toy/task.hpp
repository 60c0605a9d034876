#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qvt::toy {

// Every registered task lives in the same input space so that checkpoints
// trained on different tasks share backbone coordinates.
inline constexpr std::int64_t kFeatureDim = 8;

enum class Split { Train = 0, Val = 1, Test = 2 };

const char * to_string(Split split);
Split        parse_split(std::string_view text);

struct Dataset {
    std::int64_t              d_in = 0;
    std::vector<float>        features;  // n x d_in, row-major
    std::vector<std::int32_t> labels;

    std::int64_t            size() const noexcept { return static_cast<std::int64_t>(labels.size()); }
    std::span<const float>  row(std::int64_t i) const {
        return std::span<const float>(features).subspan(static_cast<std::size_t>(i * d_in),
                                                        static_cast<std::size_t>(d_in));
    }
};

// Synthetic classification task with 60/20/20 train/val/test splits.
// Regenerating from (name, seed) is bit-identical.
class ToyTask {
public:
    ToyTask(std::string name, std::uint64_t seed, std::int64_t n_classes, Dataset train, Dataset val, Dataset test);

    const std::string & name() const noexcept { return name_; }
    std::uint64_t       seed() const noexcept { return seed_; }
    std::int64_t        d_in() const noexcept { return train_.d_in; }
    std::int64_t        n_classes() const noexcept { return n_classes_; }

    // Every call counts as one read of that split.
    const Dataset & split(Split s) const;
    std::size_t     reads(Split s) const { return (*reads_)[static_cast<std::size_t>(s)].load(); }
    void            reset_read_counters() const;

    // Copy with label y replaced by perm[y] in every split. Read counters
    // of the copy start at zero.
    ToyTask with_permuted_labels(std::span<const std::int32_t> perm) const;

private:
    std::string   name_;
    std::uint64_t seed_;
    std::int64_t  n_classes_;
    Dataset       train_, val_, test_;
    std::shared_ptr<std::array<std::atomic<std::size_t>, 3>> reads_;
};

// Registered generators: blobs-A, blobs-B, moons, xor-grid.
const std::vector<std::string> & registered_tasks();
bool                             is_registered_task(std::string_view name);

// Throws ValidationError for an unknown name or n < 10.
ToyTask make_task(std::string_view name, std::uint64_t seed, std::int64_t n = 1000);

}  // namespace qvt::toy
