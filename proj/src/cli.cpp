#include "qvt/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qvt/checkpoint.hpp"
#include "qvt/errors.hpp"
#include "qvt/geometry.hpp"
#include "qvt/quantizer.hpp"
#include "qvt/qv.hpp"
#include "qvt/qvc_io.hpp"
#include "qvt/toy/sweep.hpp"
#include "qvt/toy/train.hpp"

namespace qvt::cli {

namespace fs = std::filesystem;
using json   = nlohmann::json;

namespace {

struct RunReport {
    std::string                        command;
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;
    std::map<std::string, double>      metrics;
    std::map<std::string, bool>        flags;
    std::optional<json>                records;
    std::string                        error;

    std::string to_json() const {
        json j = {
            {"schema_version", kSchemaVersion},
            {"command", command},
            {"status", error.empty() ? "ok" : "error"},
            {"inputs", inputs},
            {"outputs", outputs},
            {"metrics", metrics},
            {"flags", flags},
        };
        if (!error.empty()) j["error"] = error;
        if (records) j["records"] = *records;
        return j.dump();
    }
};

// Options shared by every command that fake-quantizes.
struct QuantOptions {
    int                      bits = 3;
    std::vector<std::string> exclude;
    bool                     no_exclude = false;

    void add_to(CLI::App & app) {
        app.add_option("--bits", bits, "Quantizer bit width")->capture_default_str();
        app.add_option("--exclude", exclude, "Glob of tensor names to leave alone (repeatable; replaces the default head filter)");
        app.add_flag("--no-exclude", no_exclude, "Apply to every tensor, heads included");
    }

    QuantSpec spec() const {
        QuantSpec s{bits};
        s.validate();
        return s;
    }

    NameFilter filter() const {
        if (no_exclude) return NameFilter{};
        if (!exclude.empty()) return NameFilter(exclude);
        return NameFilter::default_head_filter();
    }

    void record(RunReport & r) const {
        r.inputs["bits"] = std::to_string(bits);
        const NameFilter f = filter();
        std::string      joined;
        for (const auto & p : f.patterns()) joined += (joined.empty() ? "" : ",") + p;
        r.inputs["exclude"] = joined;
    }
};

std::string file_hash(const fs::path & path) { return fnv1a_hex(read_file_bytes(path)); }

void note_input(RunReport & r, const std::string & key, const std::string & path) {
    r.inputs[key]           = path;
    r.inputs[key + "_hash"] = file_hash(path);
}

void note_output(RunReport & r, const std::string & key, const std::string & path) {
    r.outputs[key]           = path;
    r.outputs[key + "_hash"] = file_hash(path);
}

// Refuses to overwrite one of the command's own inputs.
void require_distinct(const std::string & out, std::initializer_list<std::string> inputs) {
    std::error_code ec;
    const fs::path  target = fs::weakly_canonical(out, ec);
    for (const auto & in : inputs) {
        if (target == fs::weakly_canonical(in, ec)) {
            throw ValidationError("output '" + out + "' would overwrite input '" + in + "'");
        }
    }
}

void require_task(const std::string & name) {
    if (!toy::is_registered_task(name)) {
        std::string known;
        for (const auto & t : toy::registered_tasks()) known += (known.empty() ? "" : ", ") + t;
        throw ValidationError("unknown task '" + name + "' (registered: " + known + ")");
    }
}

std::string read_text(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

toy::TrainConfig load_config(const std::string & path, std::optional<std::uint64_t> seed) {
    toy::TrainConfig cfg = path.empty() ? toy::TrainConfig{} : toy::TrainConfig::from_json(read_text(path));
    if (seed) cfg.seed = *seed;
    return cfg;
}

std::string lambda_key(std::string_view prefix, float lambda) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", static_cast<double>(lambda));
    return std::string(prefix) + buf;
}

void record_sweep(RunReport & r, const toy::SweepResult & s) {
    for (std::size_t i = 0; i < s.grid.size(); ++i) r.metrics[lambda_key("val_top1_lambda_", s.grid[i])] = s.val_acc[i];
    r.metrics["val_top1_baseline"]  = s.val_acc_baseline;
    r.metrics["chosen_lambda"]      = s.chosen_lambda;
    r.metrics["chosen_index"]       = static_cast<double>(s.chosen_index);
    r.metrics["test_top1_patched"]  = s.test_acc_patched;
    r.metrics["test_top1_baseline"] = s.test_acc_baseline;
    r.metrics["test_delta"]         = s.test_delta;
}

// Label for the pipeline stage that is running, so a failure can say where.
struct Stage {
    std::string name;
};

// ---------------------------------------------------------------------------

struct QuantizeCmd {
    std::string  in, out;
    QuantOptions q;

    void add(CLI::App & app) {
        app.add_option("--in", in, "Checkpoint to quantize")->required();
        app.add_option("--out", out, "Fake-quantized checkpoint")->required();
        q.add_to(app);
    }

    void run(RunReport & r) const {
        require_distinct(out, {in});
        const Checkpoint src    = load_checkpoint(in);
        const NameFilter filter = q.filter();
        const Checkpoint dst    = fake_quantize_checkpoint(src, q.spec(), filter);
        save_checkpoint(dst, out);

        double       max_err = 0.0;
        std::int64_t count   = 0;
        for (const auto & [name, t] : src) {
            if (t.rank() != 2 || filter.excludes(name)) continue;
            ++count;
            const Tensor & fq = dst.at(name);
            for (std::size_t i = 0; i < t.size(); ++i) {
                max_err = std::max(max_err, std::abs(static_cast<double>(fq[i]) - static_cast<double>(t[i])));
            }
        }
        q.record(r);
        note_input(r, "in", in);
        note_output(r, "out", out);
        r.metrics["quantized_tensors"] = static_cast<double>(count);
        r.metrics["max_abs_error"]     = max_err;
    }
};

struct ExtractCmd {
    std::string              qat, ft, out;
    std::vector<std::string> exclude;
    bool                     no_exclude            = false;
    bool                     allow_config_mismatch = false;

    void add(CLI::App & app) {
        app.add_option("--qat", qat, "QAT checkpoint")->required();
        app.add_option("--ft", ft, "Matched fine-tuned checkpoint")->required();
        app.add_option("--out", out, "Quantization vector output")->required();
        app.add_option("--exclude", exclude, "Glob of tensor names to drop (repeatable; replaces the default head filter)");
        app.add_flag("--no-exclude", no_exclude, "Keep every tensor, heads included");
        app.add_flag("--allow-config-mismatch", allow_config_mismatch,
                     "Accept a pair whose training configs differ beyond the QAT flag");
    }

    void run(RunReport & r, std::ostream & err) const {
        require_distinct(out, {qat, ft});
        ExtractOptions opts;
        opts.filter                = no_exclude ? NameFilter{} : exclude.empty() ? NameFilter::default_head_filter()
                                                                                 : NameFilter(exclude);
        opts.allow_config_mismatch = allow_config_mismatch;
        opts.on_warning            = [&](std::string_view msg) { err << "warning: " << msg << '\n'; };
        const QuantizationVector qv = extract_qv(load_checkpoint(qat), load_checkpoint(ft), opts);
        save_qv(qv, out);

        note_input(r, "qat", qat);
        note_input(r, "ft", ft);
        note_output(r, "out", out);
        r.flags["allow_config_mismatch"] = allow_config_mismatch;
        r.metrics["qv_norm"]             = qv_norm(qv);
        r.metrics["tensors"]             = static_cast<double>(qv.deltas.size());
    }
};

struct PatchCmd {
    std::string receiver, qv, out;
    float       lambda = 1.0f;

    void add(CLI::App & app) {
        app.add_option("--receiver", receiver, "Receiver checkpoint")->required();
        app.add_option("--qv", qv, "Quantization vector")->required();
        app.add_option("--lambda", lambda, "Patch scale")->capture_default_str();
        app.add_option("--out", out, "Patched checkpoint")->required();
    }

    void run(RunReport & r) const {
        require_distinct(out, {receiver, qv});
        save_checkpoint(patch(load_checkpoint(receiver), load_qv(qv), lambda), out);
        note_input(r, "receiver", receiver);
        note_input(r, "qv", qv);
        note_output(r, "out", out);
        r.metrics["lambda"] = lambda;
    }
};

struct SweepCmd {
    std::string   receiver, qv, task;
    std::uint64_t seed = 7;
    QuantOptions  q;

    void add(CLI::App & app) {
        app.add_option("--receiver", receiver, "Receiver checkpoint")->required();
        app.add_option("--qv", qv, "Donor quantization vector")->required();
        app.add_option("--task", task, "Receiver task")->required();
        app.add_option("--seed", seed, "Data seed of the receiver task")->capture_default_str();
        q.add_to(app);
    }

    void run(RunReport & r) const {
        require_task(task);
        const toy::ToyTask      t   = toy::make_task(task, seed);
        const toy::SweepResult  res = toy::lambda_sweep(load_checkpoint(receiver), load_qv(qv), t, q.spec(), q.filter());
        note_input(r, "receiver", receiver);
        note_input(r, "qv", qv);
        r.inputs["task"] = task;
        r.inputs["seed"] = std::to_string(seed);
        q.record(r);
        record_sweep(r, res);
        r.flags["receiver_val_touched"] = true;
    }
};

struct EvalCmd {
    std::string   ckpt, task, split = "test";
    std::uint64_t seed = 7;
    bool          ptq  = false;
    QuantOptions  q;

    void add(CLI::App & app) {
        app.add_option("--ckpt", ckpt, "Checkpoint to evaluate")->required();
        app.add_option("--task", task, "Task name")->required();
        app.add_option("--split", split, "train | val | test")->capture_default_str();
        app.add_option("--seed", seed, "Data seed")->capture_default_str();
        app.add_flag("--ptq", ptq, "Fake-quantize before evaluating");
        q.add_to(app);
    }

    void run(RunReport & r) const {
        require_task(task);
        const toy::Split s  = toy::parse_split(split);
        Checkpoint       ck = load_checkpoint(ckpt);
        if (ptq) ck = fake_quantize_checkpoint(ck, q.spec(), q.filter());
        const toy::ToyTask t = toy::make_task(task, seed);
        note_input(r, "ckpt", ckpt);
        r.inputs["task"]  = task;
        r.inputs["split"] = split;
        r.inputs["seed"]  = std::to_string(seed);
        if (ptq) q.record(r);
        r.flags["ptq"]    = ptq;
        r.metrics["top1"] = toy::evaluate_top1(ck, t, s);
    }
};

struct TrainCmd {
    std::string                  task, out, config;
    std::optional<std::uint64_t> seed;
    bool                         qat = false;

    void add(CLI::App & app) {
        app.add_option("--task", task, "Task name")->required();
        app.add_option("--seed", seed, "Seed for data, init and shuffling (overrides the config)");
        app.add_flag("--qat", qat, "Quantization-aware training of the backbone");
        app.add_option("--out", out, "Trained checkpoint")->required();
        app.add_option("--config", config, "Training config JSON");
    }

    void run(RunReport & r) const {
        require_task(task);
        toy::TrainConfig cfg = load_config(config, seed);
        cfg.qat              = cfg.qat || qat;
        const toy::ToyTask t = toy::make_task(task, cfg.seed);

        double       last_loss = 0.0;
        std::int64_t steps     = 0;
        toy::TrainObserver obs;
        obs.on_step = [&](std::int64_t, std::int64_t, double loss) {
            last_loss = loss;
            ++steps;
        };
        const Checkpoint ck = toy::train(t, cfg, obs);
        save_checkpoint(ck, out);

        if (!config.empty()) r.inputs["config"] = config;
        r.inputs["config_hash"] = cfg.config_hash();
        r.inputs["task"]        = task;
        r.inputs["seed"]        = std::to_string(cfg.seed);
        note_output(r, "out", out);
        r.flags["qat"]               = cfg.qat;
        r.metrics["steps"]           = static_cast<double>(steps);
        r.metrics["final_loss"]      = last_loss;
        r.metrics["val_top1"]        = toy::evaluate_top1(ck, t, toy::Split::Val);
        r.metrics["val_top1_ptq"]    = toy::evaluate_top1(
            fake_quantize_checkpoint(ck, cfg.quant, NameFilter::default_head_filter()), t, toy::Split::Val);
    }
};

std::vector<std::int64_t> parse_dims(const std::string & text) {
    std::vector<std::int64_t> dims;
    std::stringstream         ss(text);
    std::string               item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const long long d = std::stoll(item, &used);
            if (used != item.size() || d < 1) throw std::invalid_argument(item);
            dims.push_back(d);
        } catch (const std::exception &) {
            throw ValidationError("--dims expects a comma-separated list of positive integers, got '" + text + "'");
        }
    }
    if (dims.empty()) throw ValidationError("--dims must name at least one dimension");
    return dims;
}

struct GeometryCmd {
    std::int64_t  instances = 1000;
    std::string   dims      = "2,8,32,64";
    std::uint64_t seed      = 7;

    void add(CLI::App & app) {
        app.add_option("--instances", instances, "Number of random instances")->capture_default_str();
        app.add_option("--dims", dims, "Comma-separated dimensions, cycled over instances")->capture_default_str();
        app.add_option("--seed", seed, "Seed")->capture_default_str();
    }

    // Returns false when any instance fails its check.
    bool run(RunReport & r) const {
        if (instances < 1) throw ValidationError("--instances must be positive");
        const geometry::VerificationSummary s = geometry::verify_geometry(instances, parse_dims(dims), seed);
        r.inputs["instances"] = std::to_string(instances);
        r.inputs["dims"]      = dims;
        r.inputs["seed"]      = std::to_string(seed);
        r.metrics["instances"]          = static_cast<double>(s.records.size());
        r.metrics["failures"]           = static_cast<double>(s.failures);
        r.metrics["max_identity_error"] = s.max_identity_error;
        r.metrics["max_lambda_error"]   = s.max_lambda_error;
        r.metrics["max_bound_ratio"]    = s.max_bound_ratio;
        r.metrics["min_cubic_slope"]    = s.min_cubic_slope;

        json recs = json::array();
        for (const auto & rec : s.records) {
            recs.push_back({
                {"index", rec.index},
                {"dim", rec.dim},
                {"kind", rec.kind},
                {"lambda_star", rec.lambda_star},
                {"lambda_line", rec.lambda_line},
                {"cos_sq", rec.cos_sq},
                {"fraction", rec.fraction},
                {"lipschitz", rec.lipschitz},
                {"epsilon", rec.epsilon},
                {"bound", rec.bound},
                {"pass", rec.pass},
            });
        }
        r.records = std::move(recs);
        return s.failures == 0;
    }
};

struct PipelineCmd {
    std::string                  donor, receiver, config, out_dir = "qvt-artifacts";
    std::optional<std::uint64_t> seed;
    QuantOptions                 q;

    void add(CLI::App & app) {
        app.add_option("--donor", donor, "Donor task")->required();
        app.add_option("--receiver", receiver, "Receiver task")->required();
        app.add_option("--seed", seed, "Seed for data, init and shuffling (overrides the config)");
        app.add_option("--config", config, "Training config JSON");
        app.add_option("--out-dir", out_dir, "Directory for intermediate checkpoints")->capture_default_str();
        q.add_to(app);
    }

    void run(RunReport & r, Stage & stage) const {
        stage.name = "validate";
        require_task(donor);
        require_task(receiver);
        toy::TrainConfig cfg = load_config(config, seed);
        cfg.qat              = false;
        toy::TrainConfig qcfg = cfg;
        qcfg.qat              = true;
        const QuantSpec  spec   = q.spec();
        const NameFilter filter = q.filter();

        if (!config.empty()) r.inputs["config"] = config;
        r.inputs["config_hash"] = cfg.config_hash();
        r.inputs["donor"]       = donor;
        r.inputs["receiver"]    = receiver;
        r.inputs["seed"]        = std::to_string(cfg.seed);
        q.record(r);

        const toy::ToyTask donor_task    = toy::make_task(donor, cfg.seed);
        const toy::ToyTask receiver_task = toy::make_task(receiver, cfg.seed);
        fs::create_directories(out_dir);
        auto artifact = [&](const char * file) { return (fs::path(out_dir) / file).generic_string(); };

        stage.name           = "donor-ft";
        const Checkpoint dft = toy::train(donor_task, cfg);
        save_checkpoint(dft, artifact("donor_ft.qvc"));
        note_output(r, "donor_ft", artifact("donor_ft.qvc"));

        stage.name            = "donor-qat";
        const Checkpoint dqat = toy::train(donor_task, qcfg);
        save_checkpoint(dqat, artifact("donor_qat.qvc"));
        note_output(r, "donor_qat", artifact("donor_qat.qvc"));

        stage.name = "donor-eval";
        const toy::Dataset & dtest = donor_task.split(toy::Split::Test);
        r.metrics["donor_ft_top1"]      = toy::accuracy(dft, dtest);
        r.metrics["donor_ft_top1_ptq"]  = toy::accuracy(fake_quantize_checkpoint(dft, spec, filter), dtest);
        r.metrics["donor_qat_top1"]     = toy::accuracy(dqat, dtest);
        r.metrics["donor_qat_top1_ptq"] = toy::accuracy(fake_quantize_checkpoint(dqat, spec, filter), dtest);

        stage.name = "extract-qv";
        ExtractOptions opts;
        opts.filter                 = filter;
        const QuantizationVector qv = extract_qv(dqat, dft, opts);
        save_qv(qv, artifact("qv.qvc"));
        note_output(r, "qv", artifact("qv.qvc"));
        r.metrics["qv_norm"] = qv_norm(qv);

        stage.name           = "receiver-ft";
        const Checkpoint rft = toy::train(receiver_task, cfg);
        save_checkpoint(rft, artifact("receiver_ft.qvc"));
        note_output(r, "receiver_ft", artifact("receiver_ft.qvc"));

        stage.name                  = "sweep";
        const toy::SweepResult sweep = toy::lambda_sweep(rft, qv, receiver_task, spec, filter);
        record_sweep(r, sweep);
        const Checkpoint at_one = fake_quantize_checkpoint(patch(rft, qv, 1.0f), spec, filter);
        r.metrics[lambda_key("val_top1_lambda_", 1.0f)] = toy::accuracy(at_one, receiver_task.split(toy::Split::Val));
        r.flags["receiver_val_touched"] = true;

        stage.name = "patch";
        save_checkpoint(patch(rft, qv, sweep.chosen_lambda), artifact("receiver_patched.qvc"));
        note_output(r, "receiver_patched", artifact("receiver_patched.qvc"));

        stage.name                          = "transfer-gain";
        r.metrics["transfer_gain_lambda_1"] = toy::transfer_gain(rft, qv, 1.0f, receiver_task, spec, filter);
    }
};

int exit_code_for(const std::exception & e) {
    if (dynamic_cast<const NumericError *>(&e)) return kExitNumeric;
    if (const auto * f = dynamic_cast<const FormatError *>(&e); f && f->kind() == FormatError::Kind::NonFinite) {
        return kExitNumeric;
    }
    return kExitValidation;
}

void emit(const RunReport & r, const std::string & report_path, std::ostream & out, std::ostream & err) {
    const std::string text = r.to_json() + "\n";
    if (report_path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(report_path, std::ios::binary | std::ios::trunc);
    if (!f || !(f << text)) err << "error: cannot write report '" << report_path << "'\n";
}

}  // namespace

int dispatch(const std::vector<std::string> & args, std::ostream & out, std::ostream & err) {
    CLI::App app{"Quantization vectors: extract, patch, sweep, train and verify", "qvt"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    std::string report_path;
    auto add_cmd = [&](const char * name, const char * desc) {
        CLI::App * sub = app.add_subcommand(name, desc);
        sub->add_option("--report", report_path, "Write the run report here instead of standard output");
        return sub;
    };

    QuantizeCmd quantize;
    ExtractCmd  extract;
    PatchCmd    patch_cmd;
    SweepCmd    sweep;
    EvalCmd     eval;
    TrainCmd    train;
    GeometryCmd geometry;
    PipelineCmd pipeline;

    CLI::App * quantize_app = add_cmd("quantize", "Fake-quantize a checkpoint");
    CLI::App * extract_app  = add_cmd("extract-qv", "Extract a quantization vector from a QAT/FT pair");
    CLI::App * patch_app    = add_cmd("patch", "Add a scaled quantization vector to a checkpoint");
    CLI::App * sweep_app    = add_cmd("sweep", "Choose the patch scale on validation and report the test gain");
    CLI::App * eval_app     = add_cmd("eval", "Top-1 accuracy of a checkpoint on a toy task");
    CLI::App * train_app    = add_cmd("train-toy", "Train the toy MLP on a registered task");
    CLI::App * geometry_app = add_cmd("verify-geometry", "Check the quadratic and cubic transfer identities numerically");
    CLI::App * pipeline_app = add_cmd("pipeline", "Donor FT+QAT, extraction, receiver FT, sweep");
    quantize.add(*quantize_app);
    extract.add(*extract_app);
    patch_cmd.add(*patch_app);
    sweep.add(*sweep_app);
    eval.add(*eval_app);
    train.add(*train_app);
    geometry.add(*geometry_app);
    pipeline.add(*pipeline_app);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp &) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError & e) {
        err << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitValidation;
    }

    CLI::App * chosen = app.get_subcommands().front();
    RunReport  report;
    report.command = chosen->get_name();
    Stage stage;
    int   code = kExitOk;
    try {
        if (chosen == quantize_app) quantize.run(report);
        else if (chosen == extract_app) extract.run(report, err);
        else if (chosen == patch_app) patch_cmd.run(report);
        else if (chosen == sweep_app) sweep.run(report);
        else if (chosen == eval_app) eval.run(report);
        else if (chosen == train_app) train.run(report);
        else if (chosen == geometry_app) {
            if (!geometry.run(report)) {
                report.error = "geometry verification failed on " +
                               std::to_string(static_cast<std::int64_t>(report.metrics["failures"])) + " instance(s)";
                code = kExitNumeric;
            }
        } else if (chosen == pipeline_app) {
            pipeline.run(report, stage);
        }
    } catch (const std::exception & e) {
        report.error = stage.name.empty() ? e.what() : "stage '" + stage.name + "': " + e.what();
        code         = exit_code_for(e);
    }
    if (!report.error.empty()) err << "error: " << report.error << '\n';
    emit(report, report_path, out, err);
    return code;
}

}  // namespace qvt::cli
