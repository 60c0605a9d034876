#include "qvt/toy/train.hpp"

#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "qvt/errors.hpp"
#include "qvt/qvc_io.hpp"
#include "qvt/rng.hpp"
#include "qvt/toy/mlp.hpp"

namespace qvt::toy {

using json = nlohmann::json;

void TrainConfig::validate() const {
    auto bad = [](const std::string & what) { throw ValidationError("invalid training config: " + what); };
    if (epochs < 0) bad("epochs must be >= 0");
    if (batch_size <= 0) bad("batch_size must be positive");
    if (!(lr > 0.0f) || !std::isfinite(lr)) bad("lr must be positive");
    if (!(weight_decay >= 0.0f) || lr * weight_decay >= 1.0f) bad("weight_decay must satisfy 0 <= lr*wd < 1");
    if (!(beta1 > 0.0f && beta1 < 1.0f)) bad("beta1 must lie in (0, 1)");
    if (!(beta2 > 0.0f && beta2 < 1.0f)) bad("beta2 must lie in (0, 1)");
    if (!(eps_adam > 0.0f)) bad("eps_adam must be positive");
    if (hidden_dims.empty()) bad("hidden_dims must name at least one layer");
    for (auto h : hidden_dims) {
        if (h <= 0) bad("hidden_dims entries must be positive");
    }
    quant.validate();
}

std::string TrainConfig::to_json(bool include_qat) const {
    // Floats go through double so the text is the shortest f64 repr of the
    // exact f32 value; from_json narrows it back bit-exactly.
    json j = {
        {"batch_size", batch_size},
        {"beta1", static_cast<double>(beta1)},
        {"beta2", static_cast<double>(beta2)},
        {"bits", quant.bits},
        {"epochs", epochs},
        {"eps_adam", static_cast<double>(eps_adam)},
        {"hidden_dims", hidden_dims},
        {"lr", static_cast<double>(lr)},
        {"seed", seed},
        {"weight_decay", static_cast<double>(weight_decay)},
    };
    if (include_qat) j["qat"] = qat;
    return j.dump();
}

TrainConfig TrainConfig::from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception & e) {
        throw ValidationError(std::string("training config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("training config must be a JSON object");

    static const std::set<std::string> known = {"batch_size", "beta1", "beta2", "bits", "epochs", "eps_adam",
                                                "hidden_dims", "lr", "qat", "seed", "weight_decay"};
    for (const auto & [k, v] : j.items()) {
        if (!known.contains(k)) throw ValidationError("unknown training config key '" + k + "'");
    }
    TrainConfig cfg;
    try {
        auto get_f = [&](const char * key, float & out) {
            if (j.contains(key)) out = static_cast<float>(j.at(key).get<double>());
        };
        if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<std::int64_t>();
        if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<std::int64_t>();
        get_f("lr", cfg.lr);
        get_f("weight_decay", cfg.weight_decay);
        get_f("beta1", cfg.beta1);
        get_f("beta2", cfg.beta2);
        get_f("eps_adam", cfg.eps_adam);
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("qat")) cfg.qat = j.at("qat").get<bool>();
        if (j.contains("bits")) cfg.quant.bits = j.at("bits").get<int>();
        if (j.contains("hidden_dims")) cfg.hidden_dims = j.at("hidden_dims").get<std::vector<std::int64_t>>();
    } catch (const json::exception & e) {
        throw ValidationError(std::string("training config has a field of the wrong type: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string TrainConfig::config_hash() const {
    return fnv1a_hex(to_json(/*include_qat=*/false));
}

Checkpoint train(const ToyTask & task, const TrainConfig & cfg, const TrainObserver & observer) {
    cfg.validate();
    const MlpArch arch{task.d_in(), cfg.hidden_dims, task.n_classes()};
    Mlp           net = Mlp::initialized(arch, cfg.seed);

    const Meta meta{
        {"kind", "checkpoint"},
        {"task", task.name()},
        {"seed", std::to_string(cfg.seed)},
        {"data_seed", std::to_string(task.seed())},
        {"regime", cfg.qat ? "QAT" : "FT"},
        {"bits", std::to_string(cfg.quant.bits)},
        {"config_hash", cfg.config_hash()},
        {"config", cfg.to_json()},
    };
    if (observer.on_init) observer.on_init(net.to_checkpoint(meta));

    const Dataset &           data = task.split(Split::Train);
    std::vector<std::int64_t> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, "train/shuffle"));

    AdamWState         state = AdamWState::zeros(net.params().size());
    std::vector<float> grad(net.params().size());
    const AdamWHyper   hyper = cfg.adamw();
    std::int64_t       step  = 0;

    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::int64_t>(order));
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t count = std::min(order.size() - begin, static_cast<std::size_t>(cfg.batch_size));
            const std::span<const std::int64_t> batch(order.data() + begin, count);

            double loss;
            if (cfg.qat) {
                const std::vector<float> forward_weights = net.quantized_backbone(cfg.quant);
                loss = net.loss_and_grad(forward_weights, data, batch, grad);
            } else {
                loss = net.loss_and_grad(net.params(), data, batch, grad);
            }
            if (!std::isfinite(loss)) {
                throw NumericError("training diverged: loss is not finite at epoch " + std::to_string(epoch) +
                                   ", step " + std::to_string(step));
            }
            adamw_step(state, net.params(), grad, hyper);
            if (observer.on_step) observer.on_step(epoch, step, loss);
            ++step;
        }
    }
    return net.to_checkpoint(meta);
}

double accuracy(const Checkpoint & ckpt, const Dataset & data) {
    const Mlp net = Mlp::from_checkpoint(ckpt);
    if (net.arch().d_in != data.d_in) {
        throw ValidationError("checkpoint expects " + std::to_string(net.arch().d_in) + " input features, data has " +
                              std::to_string(data.d_in));
    }
    if (data.size() == 0) return 0.0;
    std::int64_t correct = 0;
    for (std::int64_t i = 0; i < data.size(); ++i) {
        if (net.predict(net.params(), data.row(i)) == data.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

double evaluate_top1(const Checkpoint & ckpt, const ToyTask & task, Split split) {
    const MlpArch arch = infer_arch(ckpt);
    if (arch.d_in != task.d_in() || arch.n_classes != task.n_classes()) {
        throw ValidationError("checkpoint (d_in " + std::to_string(arch.d_in) + ", classes " +
                              std::to_string(arch.n_classes) + ") does not match task '" + task.name() + "' (d_in " +
                              std::to_string(task.d_in()) + ", classes " + std::to_string(task.n_classes()) + ")");
    }
    return accuracy(ckpt, task.split(split));
}

}  // namespace qvt::toy
