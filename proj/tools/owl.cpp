// owl: synthesize streams, calibrate agents, run experiments and grids,
// compare report sets.

#include "owl/owl.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::string partition_mode;
    std::string gate;
    std::string detector;
    std::string learner;
};

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw owl::Error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw owl::Error(path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw owl::Error("cannot write " + path.string());
    out << text;
    if (!out) throw owl::Error("failed writing " + path.string());
}

owl::DetectorKind parse_detector(const std::string& s) {
    if (s == "softmax") return owl::DetectorKind::softmax;
    if (s == "energy") return owl::DetectorKind::energy;
    if (s == "evm") return owl::DetectorKind::evm_score;
    throw owl::InvalidArgument("unknown detector: " + s);
}

// Gate "off" disables management entirely; "labels" is the labeled upper bound.
void apply_gate(owl::AgentConfig& a, const std::string& gate) {
    if (gate == "on") {
        a.manager.gate_enabled = true;
    } else if (gate == "off") {
        a.manager = owl::unmanaged(a.manager);
    } else if (gate == "labels") {
        a.mode = owl::AgentMode::with_label;
    } else {
        throw owl::InvalidArgument("unknown gate setting: " + gate);
    }
}

void apply_learner(owl::AgentConfig& a, const std::string& name) {
    a.learner = owl::parse_learner_kind(name);
    if (a.mode == owl::AgentMode::towl_lc || a.mode == owl::AgentMode::towl_fevm)
        a.mode = a.learner == owl::LearnerKind::fevm ? owl::AgentMode::towl_fevm : owl::AgentMode::towl_lc;
}

void apply(owl::ExperimentConfig& c, const Overrides& o) {
    if (o.seed) c.stream.seed = *o.seed;
    if (!o.learner.empty()) apply_learner(c.agent, o.learner);
    if (!o.detector.empty()) c.agent.detector.kind = parse_detector(o.detector);
    if (!o.gate.empty()) apply_gate(c.agent, o.gate);
    if (!o.partition_mode.empty()) c.agent.manager.partition_mode = owl::parse_partition_mode(o.partition_mode);
}

owl::ExperimentConfig load_config(const std::string& path, const Overrides& o) {
    owl::ExperimentConfig c = path.empty() ? owl::ExperimentConfig{} : read_json(path).get<owl::ExperimentConfig>();
    apply(c, o);
    c.validate();
    return c;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// --- synth ---------------------------------------------------------------

int cmd_synth(const std::string& config_path, const Overrides& o, const fs::path& out) {
    const auto c = load_config(config_path, o);
    const auto data = owl::synthesize_stream(c.stream, c.geometry);
    fs::create_directories(out);
    owl::write_features(data.pretrain, out / "pretrain.owlf");
    owl::write_features(data.validation, out / "validation.owlf");
    owl::write_features(owl::concat_rows(data.batches), out / "stream.owlf");
    spdlog::info("synth: wrote {} pretrain, {} validation, {} stream rows to {}", data.pretrain.size(),
                 data.validation.size(), c.stream.stream_length(), out.string());
    return 0;
}

// --- calibrate -----------------------------------------------------------

int cmd_calibrate(const std::string& config_path, const Overrides& o, const fs::path& out) {
    const auto c = load_config(config_path, o);
    const auto data = owl::synthesize_stream(c.stream, c.geometry);
    const owl::Agent agent =
        owl::calibrate_agent(c.agent, data.pretrain, data.validation, data.known_class_count, c.stream.seed);
    fs::create_directories(out);
    const json summary{{"dim", agent.dim},
                       {"known_classes", agent.known_classes},
                       {"detector", agent.detector},
                       {"gate", agent.gate}};
    write_text(out / "calibration.json", dump(summary));
    owl::save_checkpoint(agent, out / "agent.ckpt");
    spdlog::info("calibrate: wrote {}", (out / "calibration.json").string());
    return 0;
}

// --- run -----------------------------------------------------------------

int cmd_run(const std::string& config_path, const Overrides& o, const fs::path& out, const std::string& checkpoints) {
    const auto c = load_config(config_path, o);
    owl::ExperimentReport report;
    report.config = c;
    for (std::uint64_t seed : owl::run_seeds(c.stream)) {
        owl::StreamConfig sc = c.stream;
        sc.seed = seed;
        const auto data = owl::synthesize_stream(sc, c.geometry);
        owl::Agent agent = owl::calibrate_agent(c.agent, data.pretrain, data.validation, data.known_class_count, seed);
        owl::RunReport r = owl::run_stream(agent, data.batches, c.window);
        r.seed = seed;
        spdlog::info("run: seed {} window OWM {:.4f}", seed, r.window_owm);
        report.runs.push_back(std::move(r));
        if (!checkpoints.empty()) {
            fs::create_directories(checkpoints);
            owl::save_checkpoint(agent, fs::path(checkpoints) / ("run_" + std::to_string(seed) + ".ckpt"));
        }
    }
    owl::summarize(report);
    const fs::path target = fs::is_directory(out) ? out / "report.json" : out;
    write_text(target, dump(report));
    spdlog::info("run: OWM {:.4f} +- {:.4f} -> {}", report.owm_mean, report.owm_std, target.string());
    return 0;
}

// --- grid ----------------------------------------------------------------

struct GridCell {
    std::string detector, learner, gate, partition;
    int unknown = 0;
    owl::ExperimentConfig config;

    std::string slug() const {
        return detector + "_" + learner + "_" + gate + "_" + partition + "_u" + std::to_string(unknown);
    }

    std::string method() const {
        std::string name;
        if (learner == "fevm") {
            name = "FEVM";
        } else {
            static const std::map<std::string, std::string> det{
                {"softmax", "SM OOD"}, {"energy", "Energy OOD"}, {"evm", "EVM OOD"}};
            std::string upper = learner;
            std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char ch) { return std::toupper(ch); });
            name = det.at(detector) + " + LC + " + upper;
        }
        name += " + Finch " + std::string(partition == "auto" ? "auto" : partition == "fp" ? "FP" : "SP");
        if (gate == "off") name += " + no manager";
        if (gate == "labels") name += " + with label";
        return name;
    }
};

std::vector<std::string> string_list(const json& j, const char* key, std::vector<std::string> fallback) {
    if (!j.contains(key)) return fallback;
    auto v = j.at(key).get<std::vector<std::string>>();
    if (v.empty()) throw owl::InvalidArgument(std::string("grid: empty list for ") + key);
    return v;
}

std::vector<GridCell> expand_grid(const json& plan, const Overrides& o) {
    owl::ExperimentConfig base = plan.value("base", owl::ExperimentConfig{});
    apply(base, o);
    const auto detectors = string_list(plan, "detectors", {o.detector.empty() ? "softmax" : o.detector});
    const auto learners = string_list(plan, "learners", {o.learner.empty() ? "fevm" : o.learner});
    const auto gates = string_list(plan, "gates", {o.gate.empty() ? "on" : o.gate});
    const auto partitions = string_list(plan, "partition_modes", {o.partition_mode.empty() ? "auto" : o.partition_mode});
    const bool explicit_partition = plan.contains("partition_modes") || !o.partition_mode.empty();
    const auto unknowns = plan.value("unknown_counts", std::vector<int>{base.stream.unknown_class_count});
    const int pool = base.stream.unknown_total();

    std::vector<GridCell> cells;
    for (const auto& d : detectors)
        for (const auto& l : learners)
            for (const auto& g : gates)
                for (const auto& p : partitions)
                    for (int u : unknowns) {
                        GridCell cell{d, l, g, g == "off" && !explicit_partition ? "fp" : p, u, base};
                        auto& a = cell.config.agent;
                        a.mode = owl::AgentMode::towl_lc;
                        apply_learner(a, l);
                        a.detector.kind = parse_detector(d);
                        a.manager.partition_mode = owl::parse_partition_mode(p);
                        apply_gate(a, g);
                        if (g == "off" && explicit_partition) a.manager.partition_mode = owl::parse_partition_mode(p);
                        // the unknown pool size stays fixed across unknown-class counts
                        cell.config.stream.unknown_class_count = u;
                        cell.config.stream.images_per_unknown_class = u > 0 ? pool / u : 0;
                        cell.config.stream.run_count = 1;
                        cell.config.validate();
                        cells.push_back(std::move(cell));
                    }
    return cells;
}

int cmd_grid(const std::string& config_path, const Overrides& o, const fs::path& out, int parallel) {
    if (config_path.empty()) throw owl::InvalidArgument("grid: --config is required");
    const json plan = read_json(config_path);
    const auto cells = expand_grid(plan, o);
    std::vector<std::uint64_t> seeds;
    if (plan.contains("seeds")) {
        seeds = plan.at("seeds").get<std::vector<std::uint64_t>>();
    } else {
        seeds = owl::run_seeds(cells.front().config.stream);
    }
    if (seeds.empty()) throw owl::InvalidArgument("grid: no seeds");
    fs::create_directories(out);

    struct Job {
        std::size_t cell;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < cells.size(); ++c)
        for (auto s : seeds) jobs.push_back({c, s});

    std::vector<std::optional<double>> scores(jobs.size());
    std::vector<std::string> failures;
    std::mutex failure_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const auto& job = jobs[i];
            const auto& cell = cells[job.cell];
            const std::string name = cell.slug() + "_seed" + std::to_string(job.seed);
            try {
                owl::ExperimentReport report;
                report.config = cell.config;
                report.config.stream.seed = job.seed;
                report.runs.push_back(owl::run_single(cell.config, job.seed));
                owl::summarize(report);
                write_text(out / (name + ".json"), dump(report));
                scores[i] = report.owm_mean;
                spdlog::info("grid: {} OWM {:.4f}", name, report.owm_mean);
            } catch (const std::exception& e) {
                std::lock_guard lock(failure_mutex);
                failures.push_back(name + ": " + e.what());
            }
        }
    };
    const auto workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(parallel, 1)), 1, jobs.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::string csv = "method,unknown_classes,owm_mean,owm_std,runs\n";
    for (std::size_t c = 0; c < cells.size(); ++c) {
        std::vector<double> v;
        for (std::size_t i = 0; i < jobs.size(); ++i)
            if (jobs[i].cell == c && scores[i]) v.push_back(*scores[i]);
        if (v.empty()) continue;
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        csv += "\"" + cells[c].method() + "\"," + std::to_string(cells[c].unknown) + "," + fmt::format("{:.6f}", mean) +
               "," + fmt::format("{:.6f}", sd) + "," + std::to_string(v.size()) + "\n";
    }
    write_text(out / "aggregate.csv", csv);

    if (!failures.empty()) {
        std::sort(failures.begin(), failures.end());
        for (const auto& f : failures) std::cerr << "failed cell " << f << "\n";
        return 1;
    }
    return 0;
}

// --- compare -------------------------------------------------------------

// Window OWM per seed for every report set found under a path. A file is one
// set keyed by its own name; a directory of grid reports is grouped by cell.
std::map<std::string, std::map<std::uint64_t, double>> load_report_sets(const fs::path& path) {
    std::map<std::string, std::map<std::uint64_t, double>> sets;
    auto add = [&sets](const std::string& key, const fs::path& file) {
        const auto report = read_json(file).get<owl::ExperimentReport>();
        for (const auto& r : report.runs) sets[key][r.seed] = r.window_owm;
    };
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(path))
            if (e.path().extension() == ".json") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            std::string stem = f.stem().string();
            const auto at = stem.rfind("_seed");
            add(at == std::string::npos ? stem : stem.substr(0, at), f);
        }
    } else {
        add("report", path);
    }
    if (sets.empty()) throw owl::InvalidArgument("compare: no reports under " + path.string());
    return sets;
}

int cmd_compare(const std::string& a_path, const std::string& b_path, const std::string& out) {
    const auto a = load_report_sets(a_path);
    const auto b = load_report_sets(b_path);
    const bool single = a.size() == 1 && b.size() == 1;
    json rows = json::array();
    for (const auto& [key, runs_a] : a) {
        const auto it = single ? b.begin() : b.find(key);
        if (it == b.end()) continue;
        std::vector<double> va, vb;
        for (const auto& [seed, score] : runs_a) {
            const auto m = it->second.find(seed);
            if (m == it->second.end()) continue;
            va.push_back(score);
            vb.push_back(m->second);
        }
        json row{{"cell", key}, {"pairs", va.size()}};
        if (va.size() < 2) {
            row["error"] = "fewer than 2 paired seeds";
        } else {
            const auto t = owl::paired_t_test(va, vb);
            row["t"] = std::isfinite(t.t) ? json(t.t) : json(t.t > 0 ? "inf" : "-inf");
            row["p"] = t.p;
            row["mean_difference"] = t.mean_difference;
            row["df"] = t.df;
            row["degenerate"] = t.degenerate;
        }
        rows.push_back(row);
    }
    if (rows.empty()) throw owl::InvalidArgument("compare: no matching report sets");
    if (out.empty()) {
        std::cout << dump(rows);
    } else {
        write_text(fs::is_directory(out) ? fs::path(out) / "compare.json" : fs::path(out), dump(rows));
    }
    return 0;
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("owl");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("OWL_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();

    CLI::App app{"open-world learning on frozen feature streams"};
    app.require_subcommand(1);

    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    int parallel = 1;
    Overrides o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "experiment (or grid) JSON");
        sub->add_option("--seed", seed, "base seed");
        sub->add_option("--partition-mode", o.partition_mode, "FINCH partition")
            ->check(CLI::IsMember({"fp", "sp", "auto"}));
        sub->add_option("--gate", o.gate, "on: managed, off: no management, labels: ground-truth labels")
            ->check(CLI::IsMember({"on", "off", "labels"}));
        sub->add_option("--detector", o.detector, "knownness detector")->check(CLI::IsMember({"softmax", "energy", "evm"}));
        sub->add_option("--learner", o.learner, "discovered-class learner, or fevm")
            ->check(CLI::IsMember({"oncm", "onno", "ogmm", "ocbcl", "oscail", "mevm", "fevm"}));
    };

    auto* synth = app.add_subcommand("synth", "write pretrain, validation and stream feature files");
    common(synth);
    synth->add_option("--out", out, "output directory")->required();

    auto* calibrate = app.add_subcommand("calibrate", "calibrate detector threshold and quality gate");
    common(calibrate);
    calibrate->add_option("--out", out, "output directory")->required();

    std::string checkpoints;
    auto* run = app.add_subcommand("run", "run one experiment and write its report");
    common(run);
    run->add_option("--out", out, "report file (or directory)")->required();
    run->add_option("--checkpoints", checkpoints, "directory for per-run agent checkpoints");

    auto* grid = app.add_subcommand("grid", "run an experiment grid");
    common(grid);
    grid->add_option("--out", out, "report directory")->required();
    grid->add_option("--parallel", parallel, "worker count")->check(CLI::PositiveNumber);

    std::string lhs, rhs;
    auto* compare = app.add_subcommand("compare", "paired t-tests between two report sets");
    compare->add_option("a", lhs, "report file or grid directory")->required();
    compare->add_option("b", rhs, "report file or grid directory")->required();
    compare->add_option("--out", out, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code != 0) std::cerr << app.help();
        return code == 0 ? 0 : 2;
    }

    for (auto* sub : {synth, calibrate, run, grid})
        if (sub->parsed() && sub->count("--seed") > 0) o.seed = seed;

    try {
        if (synth->parsed()) return cmd_synth(config, o, out);
        if (calibrate->parsed()) return cmd_calibrate(config, o, out);
        if (run->parsed()) return cmd_run(config, o, out, checkpoints);
        if (grid->parsed()) return cmd_grid(config, o, out, parallel);
        if (compare->parsed()) return cmd_compare(lhs, rhs, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
