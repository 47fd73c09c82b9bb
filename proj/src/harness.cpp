#include "slicing/harness.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "slicing/error.hpp"

namespace slicing {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

void write_file(const fs::path &path, const std::string &content) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
}

std::string read_file(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw MissingRunError("cannot read '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::uint64_t fnv1a(const std::string &s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

double parse_cell(const std::string &cell) {
    if (cell == "nan" || cell == "-nan")
        return std::numeric_limits<double>::quiet_NaN();
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size())
        throw std::runtime_error("malformed CSV cell '" + cell + "'");
    return v;
}

} // namespace

EnvFactory env_factory(const EnvParams &params) {
    return [params](std::uint64_t seed) { return SliceEnv(params, seed); };
}

AttackScenario attack_scenario(const ExperimentConfig &cfg) {
    return AttackScenario{cfg.reputation, cfg.attacks};
}

ReputationTraces reputation_traces(const ExperimentConfig &cfg) {
    cfg.validate();
    ReputationTraces traces;
    for (const auto &profile : cfg.profiles) {
        ReputationSystem system(cfg.reputation, {AttackProfile{cfg.tracked_bs, profile.schedule}});
        Rng rng(splitmix64(derive_seed(cfg.seed, Stream::Feedback) ^ fnv1a(profile.name)));
        auto &trace = traces[profile.name];
        trace.reserve(static_cast<std::size_t>(cfg.reputation_slots));
        for (int t = 0; t < cfg.reputation_slots; ++t) {
            system.observe_slot(t, rng);
            trace.push_back(system.records()[static_cast<std::size_t>(cfg.tracked_bs)].current);
        }
    }
    return traces;
}

ReputationTraces run_reputation_experiment(const ExperimentConfig &cfg) {
    ReputationTraces traces = reputation_traces(cfg);
    for (const auto &[name, trace] : traces) {
        std::ostringstream csv;
        csv << "slot,bs_id,reputation\n";
        for (std::size_t t = 0; t < trace.size(); ++t)
            csv << t << "," << cfg.tracked_bs << "," << num(trace[t]) << "\n";
        write_file(fs::path(cfg.output_dir) / ("reputation_" + name + ".csv"), csv.str());
    }
    return traces;
}

nlohmann::json RunSummary::to_json() const {
    auto finite_or_null = [](double v) -> nlohmann::json {
        return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
    };
    return {{"mode", mode},
            {"attacks", attacks},
            {"episodes", episodes},
            {"window", window},
            {"mean_latency_norm", finite_or_null(mean_latency_norm)},
            {"dos_rate", dos_rate},
            {"mean_reward", mean_reward},
            {"final_dual", final_dual}};
}

RunSummary summarize(const std::vector<EpisodeRecord> &episodes, Mode mode, bool attacks,
                     int window) {
    RunSummary s;
    s.mode = to_string(mode);
    s.attacks = attacks;
    s.episodes = static_cast<int>(episodes.size());
    const std::size_t n = std::min<std::size_t>(episodes.size(), static_cast<std::size_t>(window));
    s.window = static_cast<int>(n);
    if (n == 0) {
        s.mean_latency_norm = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    double lat = 0.0;
    int lat_n = 0;
    for (std::size_t i = episodes.size() - n; i < episodes.size(); ++i) {
        const auto &e = episodes[i];
        if (std::isfinite(e.mean_latency_norm)) {
            lat += e.mean_latency_norm;
            ++lat_n;
        }
        s.dos_rate += e.dos_rate;
        s.mean_reward += e.mean_reward;
    }
    s.mean_latency_norm = lat_n ? lat / lat_n : std::numeric_limits<double>::quiet_NaN();
    s.dos_rate /= static_cast<double>(n);
    s.mean_reward /= static_cast<double>(n);
    s.final_dual = episodes.back().dual;
    return s;
}

std::string run_tag(Mode mode, bool attacks) {
    return to_string(mode) + (attacks ? "_attack" : "");
}

std::string training_csv(const std::vector<EpisodeRecord> &episodes) {
    std::ostringstream csv;
    csv << kTrainingHeader << "\n";
    for (const auto &e : episodes)
        csv << e.episode << "," << num(e.mean_latency_norm) << "," << num(e.dos_rate) << ","
            << num(e.dual) << "," << num(e.critic_loss_r) << "," << num(e.critic_loss_c) << ","
            << num(e.actor_obj) << "\n";
    return csv.str();
}

std::vector<EpisodeRecord> read_training_csv(const fs::path &path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != kTrainingHeader)
        throw std::runtime_error("'" + path.string() + "' is not a training log");
    std::vector<EpisodeRecord> out;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> cells;
        std::istringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ','))
            cells.push_back(cell);
        if (cells.size() != 7)
            throw std::runtime_error("'" + path.string() + "': malformed row '" + line + "'");
        EpisodeRecord e;
        e.episode = static_cast<int>(parse_cell(cells[0]));
        e.mean_latency_norm = parse_cell(cells[1]);
        e.dos_rate = parse_cell(cells[2]);
        e.dual = parse_cell(cells[3]);
        e.critic_loss_r = parse_cell(cells[4]);
        e.critic_loss_c = parse_cell(cells[5]);
        e.actor_obj = parse_cell(cells[6]);
        e.mean_cost = e.dos_rate;
        e.mean_reward = std::isfinite(e.mean_latency_norm)
                            ? -e.mean_latency_norm * (1.0 - e.dos_rate)
                            : 0.0;
        out.push_back(e);
    }
    return out;
}

TrainingResult run_training(const ExperimentConfig &cfg, Mode mode, bool attacks) {
    cfg.validate();
    std::optional<AttackScenario> scenario;
    if (attacks)
        scenario = attack_scenario(cfg);

    TrainingResult result;
    result.log = train(env_factory(cfg.env), cfg.agent, mode, cfg.seed, scenario);
    result.summary = summarize(result.log.episodes, mode, attacks, cfg.summary_window);

    const fs::path out(cfg.output_dir);
    const std::string tag = run_tag(mode, attacks);
    write_file(out / ("train_" + tag + ".csv"), training_csv(result.log.episodes));
    write_file(out / ("checkpoint_" + tag + ".json"), result.log.checkpoint.dump() + "\n");
    write_file(out / ("summary_" + tag + ".json"), result.summary.to_json().dump(2) + "\n");
    return result;
}

std::vector<EpisodeRecord> run_evaluation(const ExperimentConfig &cfg, Mode mode, bool attacks) {
    cfg.validate();
    const fs::path out(cfg.output_dir);
    const std::string tag = run_tag(mode, attacks);
    const fs::path ckpt_path = out / ("checkpoint_" + tag + ".json");
    if (!fs::exists(ckpt_path))
        throw MissingRunError("missing " + ckpt_path.string() + "; run `sim train --mode " +
                              to_string(mode) + (attacks ? " --attacks" : "") + "` first");
    const auto ckpt = nlohmann::json::parse(read_file(ckpt_path));
    const PdDdpgAgent agent = PdDdpgAgent::restore(ckpt, cfg.agent, cfg.seed);

    std::optional<AttackScenario> scenario;
    if (attacks)
        scenario = attack_scenario(cfg);
    // Evaluation draws arrivals from a stream distinct from training.
    const std::uint64_t eval_seed = splitmix64(cfg.seed ^ 0x5eed0e7a1ULL);
    auto records = evaluate(env_factory(cfg.env), agent, cfg.eval_episodes,
                            cfg.agent.slots_per_episode, eval_seed, scenario);
    write_file(out / ("eval_" + tag + ".csv"), training_csv(records));
    return records;
}

std::vector<fs::path> emit_figure_data(const ExperimentConfig &cfg) {
    cfg.validate();
    const fs::path out(cfg.output_dir);

    std::vector<std::string> missing;
    auto need = [&](const std::string &file, const std::string &command) {
        if (!fs::exists(out / file))
            missing.push_back(file + " (" + command + ")");
    };
    for (const auto &p : cfg.profiles)
        need("reputation_" + p.name + ".csv", "sim reputation");
    need("train_constrained.csv", "sim train --mode constrained");
    need("train_min_latency.csv", "sim train --mode min-latency");
    need("train_min_dos.csv", "sim train --mode min-dos");
    need("train_constrained_attack.csv", "sim train --mode constrained --attacks");
    if (!missing.empty()) {
        std::string msg = "missing runs:";
        for (const auto &m : missing)
            msg += " " + m + ";";
        throw MissingRunError(msg);
    }

    std::vector<fs::path> written;
    for (const auto &p : cfg.profiles) {
        std::istringstream in(read_file(out / ("reputation_" + p.name + ".csv")));
        std::string line;
        std::getline(in, line);
        std::ostringstream csv;
        csv << "slot,reputation\n";
        while (std::getline(in, line)) {
            if (line.empty())
                continue;
            const auto a = line.find(',');
            const auto b = line.rfind(',');
            csv << line.substr(0, a) << "," << line.substr(b + 1) << "\n";
        }
        const fs::path path = out / ("fig2_" + p.name + ".csv");
        write_file(path, csv.str());
        written.push_back(path);
    }

    const auto con = read_training_csv(out / "train_constrained.csv");
    const auto lat = read_training_csv(out / "train_min_latency.csv");
    const auto dos = read_training_csv(out / "train_min_dos.csv");
    const auto att = read_training_csv(out / "train_constrained_attack.csv");

    auto at = [](const std::vector<EpisodeRecord> &v, std::size_t i, auto field) -> std::string {
        return i < v.size() ? num(v[i].*field) : std::string();
    };
    const std::size_t n3 = std::max({con.size(), lat.size(), dos.size()});
    const std::size_t n4 = std::max(con.size(), att.size());

    std::ostringstream f3a, f3b, f4a, f4b;
    f3a << "episode,latency_constrained,latency_min_latency,latency_min_dos\n";
    f3b << "episode,dos_constrained,dos_min_latency,dos_min_dos\n";
    for (std::size_t i = 0; i < n3; ++i) {
        f3a << i << "," << at(con, i, &EpisodeRecord::mean_latency_norm) << ","
            << at(lat, i, &EpisodeRecord::mean_latency_norm) << ","
            << at(dos, i, &EpisodeRecord::mean_latency_norm) << "\n";
        f3b << i << "," << at(con, i, &EpisodeRecord::dos_rate) << ","
            << at(lat, i, &EpisodeRecord::dos_rate) << "," << at(dos, i, &EpisodeRecord::dos_rate)
            << "\n";
    }
    f4a << "episode,latency_no_attack,latency_attack\n";
    f4b << "episode,dos_no_attack,dos_attack,dual_no_attack,dual_attack\n";
    for (std::size_t i = 0; i < n4; ++i) {
        f4a << i << "," << at(con, i, &EpisodeRecord::mean_latency_norm) << ","
            << at(att, i, &EpisodeRecord::mean_latency_norm) << "\n";
        f4b << i << "," << at(con, i, &EpisodeRecord::dos_rate) << ","
            << at(att, i, &EpisodeRecord::dos_rate) << "," << at(con, i, &EpisodeRecord::dual)
            << "," << at(att, i, &EpisodeRecord::dual) << "\n";
    }
    for (auto &[name, body] : {std::pair{"fig3a.csv", f3a.str()}, std::pair{"fig3b.csv", f3b.str()},
                               std::pair{"fig4a.csv", f4a.str()}, std::pair{"fig4b.csv", f4b.str()}}) {
        write_file(out / name, body);
        written.push_back(out / name);
    }
    return written;
}

} // namespace slicing
