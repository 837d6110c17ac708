#include "mapexit/model_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mapexit/errors.hpp"

namespace mapexit {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ValidationError(where + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) throw ValidationError(where + ": unknown key '" + key + "'");
    }
}

double number(const json& v, const std::string& where) {
    if (!v.is_number()) throw ValidationError(where + ": expected a number");
    return v.get<double>();
}

JumpLaw parse_mixture(const json& arr, const std::string& where) {
    if (!arr.is_array()) throw ValidationError(where + ": expected an array of {weight, mu}");
    JumpLaw law;
    for (std::size_t m = 0; m < arr.size(); ++m) {
        const std::string w = where + "[" + std::to_string(m) + "]";
        reject_unknown(arr[m], {"weight", "mu"}, w);
        if (!arr[m].contains("weight") || !arr[m].contains("mu")) throw ValidationError(w + ": needs weight and mu");
        law.components.push_back({number(arr[m]["weight"], w + ".weight"), number(arr[m]["mu"], w + ".mu")});
    }
    return law;
}

std::pair<std::size_t, std::size_t> parse_pair_key(const std::string& key) {
    const auto comma = key.find(',');
    if (comma == std::string::npos) throw ValidationError("transition_jumps: key '" + key + "' must look like \"i,j\"");
    try {
        std::size_t pos_i = 0, pos_j = 0;
        const std::string si = key.substr(0, comma), sj = key.substr(comma + 1);
        const long i = std::stol(si, &pos_i);
        const long j = std::stol(sj, &pos_j);
        if (pos_i != si.size() || pos_j != sj.size() || i < 0 || j < 0) throw std::invalid_argument(key);
        return {static_cast<std::size_t>(i), static_cast<std::size_t>(j)};
    } catch (const std::logic_error&) {
        throw ValidationError("transition_jumps: key '" + key + "' must hold two non-negative integers");
    }
}

json mixture_json(const JumpLaw& law) {
    json arr = json::array();
    for (const auto& c : law.components) arr.push_back({{"weight", c.weight}, {"mu", c.rate}});
    return arr;
}

}  // namespace

MapModel parse_model(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("model file is not valid JSON: ") + e.what());
    }
    reject_unknown(doc, {"states", "Q", "kill_rate", "phases", "transition_jumps"}, "model");
    for (const char* key : {"states", "Q", "phases"}) {
        if (!doc.contains(key)) throw ValidationError(std::string("model: missing required key '") + key + "'");
    }
    if (!doc["states"].is_number_integer() || doc["states"].get<long>() < 1) {
        throw ValidationError("states: expected a positive integer");
    }
    const auto n = static_cast<std::size_t>(doc["states"].get<long>());

    MapModel model;
    const json& q = doc["Q"];
    if (!q.is_array() || q.size() != n) throw ValidationError("Q: expected " + std::to_string(n) + " rows");
    model.Q = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (!q[i].is_array() || q[i].size() != n) {
            throw ValidationError("Q[" + std::to_string(i) + "]: expected " + std::to_string(n) + " entries");
        }
        for (std::size_t j = 0; j < n; ++j) {
            model.Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                number(q[i][j], "Q[" + std::to_string(i) + "][" + std::to_string(j) + "]");
        }
    }
    if (doc.contains("kill_rate")) model.kill_rate = number(doc["kill_rate"], "kill_rate");

    const json& phases = doc["phases"];
    if (!phases.is_array() || phases.size() != n) {
        throw ValidationError("phases: expected " + std::to_string(n) + " entries");
    }
    for (std::size_t i = 0; i < n; ++i) {
        const std::string where = "phases[" + std::to_string(i) + "]";
        reject_unknown(phases[i], {"drift", "sigma", "jumps"}, where);
        Phase p;
        if (phases[i].contains("drift")) p.drift = number(phases[i]["drift"], where + ".drift");
        if (phases[i].contains("sigma")) p.sigma = number(phases[i]["sigma"], where + ".sigma");
        if (phases[i].contains("jumps")) {
            const json& jumps = phases[i]["jumps"];
            if (!jumps.is_array()) throw ValidationError(where + ".jumps: expected an array");
            for (std::size_t s = 0; s < jumps.size(); ++s) {
                const std::string sw = where + ".jumps[" + std::to_string(s) + "]";
                reject_unknown(jumps[s], {"rate", "mixture"}, sw);
                if (!jumps[s].contains("rate") || !jumps[s].contains("mixture")) {
                    throw ValidationError(sw + ": needs rate and mixture");
                }
                p.jumps.push_back({number(jumps[s]["rate"], sw + ".rate"), parse_mixture(jumps[s]["mixture"], sw + ".mixture")});
            }
        }
        model.phases.push_back(std::move(p));
    }
    if (doc.contains("transition_jumps")) {
        const json& tj = doc["transition_jumps"];
        if (!tj.is_object()) throw ValidationError("transition_jumps: expected an object");
        for (const auto& [key, value] : tj.items()) {
            model.transition_jumps[parse_pair_key(key)] = parse_mixture(value, "transition_jumps[" + key + "]");
        }
    }
    return model;
}

MapModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open model file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_model(buf.str());
}

std::string dump_model(const MapModel& model) {
    json doc;
    doc["states"] = model.size();
    json q = json::array();
    for (Eigen::Index i = 0; i < model.Q.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < model.Q.cols(); ++j) row.push_back(model.Q(i, j));
        q.push_back(row);
    }
    doc["Q"] = q;
    doc["kill_rate"] = model.kill_rate;
    json phases = json::array();
    for (const auto& p : model.phases) {
        if (p.auxiliary) throw DomainError("auxiliary phases cannot be written to a model file");
        json jp = {{"drift", p.drift}, {"sigma", p.sigma}};
        json jumps = json::array();
        for (const auto& s : p.jumps) jumps.push_back({{"rate", s.intensity}, {"mixture", mixture_json(s.law)}});
        jp["jumps"] = jumps;
        phases.push_back(jp);
    }
    doc["phases"] = phases;
    if (!model.transition_jumps.empty()) {
        json tj = json::object();
        for (const auto& [key, law] : model.transition_jumps) {
            tj[std::to_string(key.first) + "," + std::to_string(key.second)] = mixture_json(law);
        }
        doc["transition_jumps"] = tj;
    }
    return doc.dump(2);
}

}  // namespace mapexit
