#include "qvt/toy/task.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "qvt/errors.hpp"
#include "qvt/rng.hpp"

namespace qvt::toy {

namespace {

// Fixed stream for each generator's structural constants (means, bases).
// These do not depend on the data seed: every seed samples the same
// distribution.
constexpr std::uint64_t kStructureSeed = 0x5157'4354'5f76'31ULL;

// Generators work in a latent space; the shared sensor stage appends
// high-magnitude nuisance channels common to every task.
constexpr std::size_t kLatentDim  = 6;
constexpr std::size_t kOutlierDim = kFeatureDim - kLatentDim;

using Point = std::array<double, kLatentDim>;

struct Sample {
    Point        x;
    std::int32_t y;
};

// Offset and spread of each nuisance channel.
constexpr std::array<double, kOutlierDim> kOutlierOffset = {6.0, -4.0};
constexpr std::array<double, kOutlierDim> kOutlierSpread = {0.5, 0.5};

struct Row {
    std::array<double, kFeatureDim> x;
    std::int32_t                    y;
};

Row sense(const Sample & s, Rng & rng) {
    Row r{{}, s.y};
    std::copy(s.x.begin(), s.x.end(), r.x.begin());
    for (std::size_t k = 0; k < kOutlierDim; ++k) {
        r.x[kLatentDim + k] = kOutlierOffset[k] + kOutlierSpread[k] * rng.normal();
    }
    return r;
}

Point random_unit(Rng & rng) {
    Point  p{};
    double norm = 0.0;
    for (double & v : p) {
        v = rng.normal();
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double & v : p) v /= norm;
    return p;
}

// Orthonormal rows via Gram-Schmidt.
std::vector<Point> random_orthonormal(std::size_t count, Rng & rng) {
    std::vector<Point> basis;
    while (basis.size() < count) {
        Point v = random_unit(rng);
        for (const Point & b : basis) {
            double dot = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * b[i];
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * b[i];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-6) continue;
        for (double & x : v) x /= norm;
        basis.push_back(v);
    }
    return basis;
}

// Anisotropic Gaussian mixture: class k has mean mu_k and covariance
// R diag(sigma_k)^2 R^T for a per-class rotation R.
struct BlobSpec {
    std::int32_t n_classes;
    double       radius;
    double       sigma_lo, sigma_hi;
};

std::function<Sample(std::int32_t, Rng &)> blobs(std::string_view name, const BlobSpec & spec) {
    Rng                structure(derive_seed(kStructureSeed, name));
    std::vector<Point> means = random_orthonormal(static_cast<std::size_t>(spec.n_classes), structure);
    for (Point & m : means) {
        for (double & v : m) v *= spec.radius;
    }
    std::vector<std::vector<Point>> rotations;
    std::vector<Point>              sigmas;
    for (std::int32_t k = 0; k < spec.n_classes; ++k) {
        rotations.push_back(random_orthonormal(kLatentDim, structure));
        Point s{};
        for (double & v : s) v = structure.uniform(spec.sigma_lo, spec.sigma_hi);
        sigmas.push_back(s);
    }
    return [means, rotations, sigmas](std::int32_t label, Rng & rng) {
        const auto k = static_cast<std::size_t>(label);
        Sample     out{means[k], label};
        for (std::size_t j = 0; j < kLatentDim; ++j) {
            const double z = rng.normal() * sigmas[k][j];
            for (std::size_t i = 0; i < kLatentDim; ++i) out.x[i] += z * rotations[k][j][i];
        }
        return out;
    };
}

// 2-D generator embedded into the feature space through a fixed orthonormal
// pair, plus isotropic noise on every coordinate.
std::function<Sample(std::int32_t, Rng &)> planar(std::string_view name,
                                                  std::function<std::array<double, 2>(std::int32_t, Rng &)> gen,
                                                  double scale, double ambient_noise) {
    Rng                structure(derive_seed(kStructureSeed, name));
    std::vector<Point> basis = random_orthonormal(2, structure);
    return [basis, gen = std::move(gen), scale, ambient_noise](std::int32_t label, Rng & rng) {
        const auto p = gen(label, rng);
        Sample     out{{}, label};
        for (std::size_t i = 0; i < kLatentDim; ++i) {
            out.x[i] = scale * (p[0] * basis[0][i] + p[1] * basis[1][i]) + ambient_noise * rng.normal();
        }
        return out;
    };
}

std::array<double, 2> moon_point(std::int32_t label, Rng & rng) {
    const double t     = rng.uniform(0.0, std::numbers::pi);
    const double noise = 0.12;
    if (label == 0) {
        return {std::cos(t) + noise * rng.normal(), std::sin(t) + noise * rng.normal()};
    }
    return {1.0 - std::cos(t) + noise * rng.normal(), 0.5 - std::sin(t) + noise * rng.normal()};
}

// Checkerboard on a 4x4 grid over [-2, 2]^2; the sample is drawn uniformly
// from a cell of the requested colour.
std::array<double, 2> xor_grid_point(std::int32_t label, Rng & rng) {
    for (;;) {
        const double x    = rng.uniform(-2.0, 2.0);
        const double y    = rng.uniform(-2.0, 2.0);
        const auto   cell = static_cast<std::int64_t>(std::floor(x) + std::floor(y));
        if (((cell % 2) + 2) % 2 == label) return {x, y};
    }
}

struct Generator {
    std::int32_t                               n_classes;
    std::function<Sample(std::int32_t, Rng &)> sample;
};

Generator generator_for(std::string_view name) {
    if (name == "blobs-A") return {4, blobs(name, {4, 2.2, 0.4, 1.2})};
    if (name == "blobs-B") return {4, blobs(name, {4, 2.2, 0.4, 1.2})};
    if (name == "moons") return {2, planar(name, moon_point, 1.5, 0.1)};
    if (name == "xor-grid") return {2, planar(name, xor_grid_point, 1.0, 0.05)};
    throw ValidationError("unknown task generator '" + std::string(name) + "'");
}

Dataset to_dataset(std::span<const Row> samples) {
    Dataset d;
    d.d_in = kFeatureDim;
    d.features.reserve(samples.size() * kFeatureDim);
    d.labels.reserve(samples.size());
    for (const Row & s : samples) {
        for (double v : s.x) d.features.push_back(static_cast<float>(v));
        d.labels.push_back(s.y);
    }
    return d;
}

}  // namespace

const char * to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val:   return "val";
        case Split::Test:  return "test";
    }
    return "?";
}

Split parse_split(std::string_view text) {
    if (text == "train") return Split::Train;
    if (text == "val") return Split::Val;
    if (text == "test") return Split::Test;
    throw ValidationError("unknown split '" + std::string(text) + "' (expected train|val|test)");
}

ToyTask::ToyTask(std::string name, std::uint64_t seed, std::int64_t n_classes, Dataset train, Dataset val,
                 Dataset test)
    : name_(std::move(name)),
      seed_(seed),
      n_classes_(n_classes),
      train_(std::move(train)),
      val_(std::move(val)),
      test_(std::move(test)),
      reads_(std::make_shared<std::array<std::atomic<std::size_t>, 3>>()) {}

const Dataset & ToyTask::split(Split s) const {
    ++(*reads_)[static_cast<std::size_t>(s)];
    switch (s) {
        case Split::Train: return train_;
        case Split::Val:   return val_;
        case Split::Test:  return test_;
    }
    return test_;
}

void ToyTask::reset_read_counters() const {
    for (auto & c : *reads_) c.store(0);
}

ToyTask ToyTask::with_permuted_labels(std::span<const std::int32_t> perm) const {
    if (static_cast<std::int64_t>(perm.size()) != n_classes_) {
        throw ValidationError("label permutation must have one entry per class");
    }
    auto relabel = [&](Dataset d) {
        for (auto & y : d.labels) y = perm[static_cast<std::size_t>(y)];
        return d;
    };
    return ToyTask(name_, seed_, n_classes_, relabel(train_), relabel(val_), relabel(test_));
}

const std::vector<std::string> & registered_tasks() {
    static const std::vector<std::string> names = {"blobs-A", "blobs-B", "moons", "xor-grid"};
    return names;
}

bool is_registered_task(std::string_view name) {
    const auto & names = registered_tasks();
    return std::find(names.begin(), names.end(), name) != names.end();
}

ToyTask make_task(std::string_view name, std::uint64_t seed, std::int64_t n) {
    if (n < 10) {
        throw ValidationError("a toy task needs at least 10 examples");
    }
    const Generator gen = generator_for(name);
    Rng             rng(derive_seed(seed, name));

    std::vector<Row> samples;
    samples.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        samples.push_back(sense(gen.sample(static_cast<std::int32_t>(i % gen.n_classes), rng), rng));
    }
    rng.shuffle(std::span<Row>(samples));

    const auto n_train = static_cast<std::size_t>(n * 6 / 10);
    const auto n_val   = static_cast<std::size_t>(n * 2 / 10);
    const std::span<const Row> all(samples);
    return ToyTask(std::string(name), seed, gen.n_classes, to_dataset(all.subspan(0, n_train)),
                   to_dataset(all.subspan(n_train, n_val)), to_dataset(all.subspan(n_train + n_val)));
}

}  // namespace qvt::toy
