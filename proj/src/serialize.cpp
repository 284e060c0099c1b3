#include "skipq/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "skipq/error.hpp"

namespace skipq {

using nlohmann::json;

namespace {

json vec_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

json mat_json(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vec_json(m.row(r).transpose()));
    return out;
}

Vector vec_from(const json& j) {
    if (!j.is_array()) throw ParseError("expected an array of numbers", 0);
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ParseError("expected a number", 0);
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

Matrix mat_from(const json& j, Eigen::Index cols = -1) {
    if (!j.is_array()) throw ParseError("expected a nested array", 0);
    if (j.empty()) return Matrix(0, std::max<Eigen::Index>(cols, 0));
    const Eigen::Index c = static_cast<Eigen::Index>(j[0].size());
    Matrix m(static_cast<Eigen::Index>(j.size()), c);
    for (std::size_t r = 0; r < j.size(); ++r) {
        const Vector row = vec_from(j[r]);
        if (row.size() != c) throw ParseError("ragged matrix rows", 0);
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

const json& field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw ParseError(std::string("missing field '") + key + "'", 0);
    return j.at(key);
}

json parse_document(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), 0);
    }
}

template <class F>
auto guarded(F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad document: ") + e.what(), 0);
    }
}

json policy_json(const Policy& policy) {
    json stages = json::array();
    for (int k = 0; k < policy.num_stages(); ++k) stages.push_back(mat_json(policy.stage(k)));
    return stages;
}

Policy policy_from(const json& stages) {
    std::vector<Matrix> probs;
    for (const auto& s : stages) probs.push_back(mat_from(s));
    return Policy(std::move(probs));
}

// Strict object reader: every key must be consumed.
class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ParseError(where_ + " must be an object", 0);
    }
    ~Reader() = default;

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ParseError(where_ + "." + key + " has the wrong type", 0);
        }
    }

    template <class T>
    void get_optional(const char* key, std::optional<T>& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        if (j_.at(key).is_null()) {
            out.reset();
            return;
        }
        T value{};
        get(key, value);
        out = value;
    }

    const json* section(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ParseError("unknown key " + where_ + "." + it.key(), 0);
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace

std::string format_real(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

std::string env_to_json(const Environment& env) {
    const StagedMdp& mdp = env.mdp;
    json j;
    j["dim"] = env.features.dim();
    j["num_actions"] = mdp.num_actions();
    j["stage_sizes"] = mdp.stage_sizes();
    j["reward_kind"] = mdp.reward_kind() == RewardKind::bernoulli_mean ? "bernoulli" : "deterministic";
    json transitions = json::array();
    for (int k = 0; k < mdp.horizon(); ++k) {
        json per_action = json::array();
        for (int a = 0; a < mdp.num_actions(); ++a) per_action.push_back(mat_json(mdp.transition(k, a)));
        transitions.push_back(per_action);
    }
    j["transitions"] = transitions;
    json rewards = json::array();
    for (int k = 0; k <= mdp.horizon(); ++k) rewards.push_back(mat_json(mdp.reward_means(k)));
    j["rewards"] = rewards;
    json features = json::array();
    for (int k = 0; k < env.features.num_stages(); ++k) features.push_back(mat_json(env.features.stage_matrix(k)));
    j["features"] = features;
    j["l1_bound"] = env.features.l1_bound();
    return j.dump(1);
}

Environment env_from_json(const std::string& text) {
    const json j = parse_document(text);
    return guarded([&] {
        const int dim = field(j, "dim").get<int>();
        const int na = field(j, "num_actions").get<int>();
        const auto sizes = field(j, "stage_sizes").get<std::vector<int>>();
        const std::string kind = field(j, "reward_kind").get<std::string>();
        if (kind != "deterministic" && kind != "bernoulli") throw ParseError("unknown reward_kind " + kind, 0);
        std::vector<std::vector<Matrix>> transitions;
        for (const auto& per_action : field(j, "transitions")) {
            std::vector<Matrix> blocks;
            for (const auto& m : per_action) blocks.push_back(mat_from(m));
            transitions.push_back(std::move(blocks));
        }
        std::vector<Matrix> rewards;
        for (const auto& m : field(j, "rewards")) rewards.push_back(mat_from(m));
        std::vector<Matrix> phi;
        for (const auto& m : field(j, "features")) phi.push_back(mat_from(m, dim));
        StagedMdp mdp(sizes, na, std::move(transitions), std::move(rewards),
                      kind == "bernoulli" ? RewardKind::bernoulli_mean : RewardKind::deterministic_mean);
        FeatureMap features(dim, na, std::move(phi), field(j, "l1_bound").get<double>());
        check_compatible(mdp, features);
        return Environment{std::move(mdp), std::move(features)};
    });
}

std::string guesses_to_json(const std::vector<Guess>& guesses) {
    json list = json::array();
    for (std::size_t g = 0; g < guesses.size(); ++g) {
        const Guess& guess = guesses[g];
        json j;
        j["index"] = g;
        j["dim"] = guess.dim();
        j["horizon"] = guess.horizon();
        j["d0"] = guess.d0();
        j["radius"] = guess.radius();
        json panels = json::array();
        for (int k = 1; k < guess.horizon(); ++k) {
            json vectors = json::array();
            for (const auto& v : guess.panel(k)) vectors.push_back(vec_json(v));
            panels.push_back({{"stage", k}, {"vectors", vectors}});
        }
        j["panels"] = panels;
        list.push_back(j);
    }
    return json{{"guesses", list}}.dump(1);
}

std::vector<Guess> guesses_from_json(const std::string& text) {
    const json j = parse_document(text);
    return guarded([&] {
        std::vector<Guess> out;
        for (const auto& g : field(j, "guesses")) {
            const int horizon = field(g, "horizon").get<int>();
            std::vector<std::vector<Vector>> panels(std::max(0, horizon - 1));
            for (const auto& p : field(g, "panels")) {
                const int k = field(p, "stage").get<int>();
                if (k < 1 || k >= horizon) throw ParseError("panel stage out of range", 0);
                for (const auto& v : field(p, "vectors")) panels[k - 1].push_back(vec_from(v));
            }
            out.emplace_back(field(g, "dim").get<int>(), horizon, field(g, "d0").get<int>(),
                             field(g, "radius").get<double>(), std::move(panels));
        }
        return out;
    });
}

std::string policy_to_json(const Policy& policy) { return json{{"stages", policy_json(policy)}}.dump(1); }

Policy policy_from_json(const std::string& text) {
    const json j = parse_document(text);
    return guarded([&] { return policy_from(field(j, "stages")); });
}

std::string outcome_to_json(const SolveOutcome& outcome) {
    json j;
    j["chosen_guess"] = outcome.chosen_guess;
    j["all_rejected"] = outcome.all_rejected;
    j["fallback"] = outcome.fallback;
    j["value"] = outcome.value;
    json theta = json::array();
    for (std::size_t k = 0; k < outcome.theta.size(); ++k) theta.push_back({{"stage", k}, {"theta", vec_json(outcome.theta[k])}});
    j["theta"] = theta;
    json guesses = json::array();
    for (std::size_t g = 0; g < outcome.guesses.size(); ++g) {
        const GuessReport& r = outcome.guesses[g];
        guesses.push_back({{"index", g},
                           {"feasible", r.feasible},
                           {"empty_stage", r.empty_stage},
                           {"tightness", r.tightness},
                           {"tightness_max", r.tightness_max},
                           {"value", r.value},
                           {"member_counts", r.member_counts}});
    }
    j["guesses"] = guesses;
    j["policy"] = outcome.policy ? policy_json(*outcome.policy) : json(nullptr);
    return j.dump(1);
}

Policy policy_from_outcome_json(const std::string& text) {
    const json j = parse_document(text);
    return guarded([&] {
        const json& p = field(j, "policy");
        if (p.is_null()) throw ParseError("outcome has no policy", 0);
        return policy_from(p);
    });
}

std::string config_to_json(const ExperimentConfig& c) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j;
    j["environment"] = {{"d", c.environment.dim},
                        {"stage_sizes", c.environment.stage_sizes},
                        {"num_actions", c.environment.num_actions},
                        {"reward_kind", c.environment.reward_kind == RewardKind::bernoulli_mean ? "bernoulli"
                                                                                               : "deterministic"},
                        {"seed", c.environment.seed}};
    j["data"] = {{"n", c.data.n},
                 {"behavior", c.data.behavior == BehaviorKind::uniform ? "uniform" : "epsilon-greedy"},
                 {"mix_weight", c.data.mix_weight},
                 {"seed", c.data.seed}};
    j["learner"] = {{"lambda", c.learner.lambda},
                    {"beta", opt(c.learner.beta)},
                    {"eps_bar", opt(c.learner.eps_bar)},
                    {"theta_radius", opt(c.learner.theta_radius)},
                    {"alpha", opt(c.learner.alpha)},
                    {"grid_per_stage", c.learner.grid_per_stage},
                    {"combo_cap", c.learner.combo_cap},
                    {"net_fraction", c.learner.net_fraction},
                    {"seed", c.learner.seed}};
    j["guesses"] = {{"count", c.guesses.count},
                    {"spread", c.guesses.spread},
                    {"policy_sample", c.guesses.policy_sample},
                    {"seed", c.guesses.seed}};
    j["calibration"] = {{"replicates", c.calibration.replicates},
                        {"delta", c.calibration.delta},
                        {"seed", c.calibration.seed}};
    j["sweep"] = {{"n_values", c.sweep.n_values}, {"replicates", c.sweep.replicates}, {"seed", c.sweep.seed}};
    j["output"] = {{"dir", c.output.dir}, {"record_wall_time", c.output.record_wall_time}};
    return j.dump(1);
}

ExperimentConfig config_from_json(const std::string& text) {
    const json j = parse_document(text);
    ExperimentConfig c;
    Reader top(j, "config");
    if (const json* s = top.section("environment")) {
        Reader r(*s, "environment");
        r.get("d", c.environment.dim);
        r.get("stage_sizes", c.environment.stage_sizes);
        r.get("num_actions", c.environment.num_actions);
        std::string kind = "deterministic";
        r.get("reward_kind", kind);
        if (kind == "bernoulli") {
            c.environment.reward_kind = RewardKind::bernoulli_mean;
        } else if (kind != "deterministic") {
            throw ParseError("environment.reward_kind must be deterministic or bernoulli", 0);
        }
        r.get("seed", c.environment.seed);
        r.finish();
    }
    if (const json* s = top.section("data")) {
        Reader r(*s, "data");
        r.get("n", c.data.n);
        std::string behavior = "uniform";
        r.get("behavior", behavior);
        if (behavior == "epsilon-greedy") {
            c.data.behavior = BehaviorKind::epsilon_greedy;
        } else if (behavior != "uniform") {
            throw ParseError("data.behavior must be uniform or epsilon-greedy", 0);
        }
        r.get("mix_weight", c.data.mix_weight);
        r.get("seed", c.data.seed);
        r.finish();
    }
    if (const json* s = top.section("learner")) {
        Reader r(*s, "learner");
        r.get("lambda", c.learner.lambda);
        r.get_optional("beta", c.learner.beta);
        r.get_optional("eps_bar", c.learner.eps_bar);
        r.get_optional("theta_radius", c.learner.theta_radius);
        r.get_optional("alpha", c.learner.alpha);
        r.get("grid_per_stage", c.learner.grid_per_stage);
        r.get("combo_cap", c.learner.combo_cap);
        r.get("net_fraction", c.learner.net_fraction);
        r.get("seed", c.learner.seed);
        r.finish();
    }
    if (const json* s = top.section("guesses")) {
        Reader r(*s, "guesses");
        r.get("count", c.guesses.count);
        r.get("spread", c.guesses.spread);
        r.get("policy_sample", c.guesses.policy_sample);
        r.get("seed", c.guesses.seed);
        r.finish();
    }
    if (const json* s = top.section("calibration")) {
        Reader r(*s, "calibration");
        r.get("replicates", c.calibration.replicates);
        r.get("delta", c.calibration.delta);
        r.get("seed", c.calibration.seed);
        r.finish();
    }
    if (const json* s = top.section("sweep")) {
        Reader r(*s, "sweep");
        r.get("n_values", c.sweep.n_values);
        r.get("replicates", c.sweep.replicates);
        r.get("seed", c.sweep.seed);
        r.finish();
    }
    if (const json* s = top.section("output")) {
        Reader r(*s, "output");
        r.get("dir", c.output.dir);
        r.get("record_wall_time", c.output.record_wall_time);
        r.finish();
    }
    top.finish();
    c.validate();
    return c;
}

std::string trajectory_to_line(const Trajectory& traj) {
    std::string out = "{\"steps\": [";
    for (std::size_t k = 0; k < traj.steps.size(); ++k) {
        const Step& s = traj.steps[k];
        if (k > 0) out += ", ";
        out += "[" + std::to_string(s.state) + ", " + std::to_string(s.action) + ", " + format_real(s.reward) + "]";
    }
    out += "], \"features\": [";
    for (std::size_t k = 0; k < traj.features.size(); ++k) {
        const Matrix& m = traj.features[k];
        if (k > 0) out += ", ";
        out += "[";
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            if (r > 0) out += ", ";
            out += "[";
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                if (c > 0) out += ", ";
                out += format_real(m(r, c));
            }
            out += "]";
        }
        out += "]";
    }
    out += "]}";
    return out;
}

Trajectory trajectory_from_line(const std::string& line, std::size_t line_number) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed trajectory: ") + e.what(), line_number);
    }
    try {
        Trajectory traj;
        if (!j.is_object() || !j.contains("steps") || !j.contains("features")) {
            throw ParseError("trajectory needs 'steps' and 'features'", line_number);
        }
        for (const auto& s : j.at("steps")) {
            if (!s.is_array() || s.size() != 3) throw ParseError("each step must be [state, action, reward]", line_number);
            traj.steps.push_back({s[0].get<int>(), s[1].get<int>(), s[2].get<double>()});
        }
        for (const auto& m : j.at("features")) traj.features.push_back(mat_from(m));
        if (!traj.features.empty() && traj.features.size() != traj.steps.size()) {
            throw ParseError("features must cover every step", line_number);
        }
        return traj;
    } catch (const ParseError& e) {
        if (e.line() == line_number) throw;
        throw ParseError(std::string("malformed trajectory: ") + e.what(), line_number);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed trajectory: ") + e.what(), line_number);
    }
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
    std::string text;
    for (const auto& traj : data.trajectories) {
        text += trajectory_to_line(traj);
        text += '\n';
    }
    write_text(path, text);
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    Dataset data;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) throw ParseError("empty line", number);
        data.trajectories.push_back(trajectory_from_line(line, number));
    }
    return data;
}

}  // namespace skipq
