#pragma once

// ILBO-CKPT v1 text checkpoints.
//
//   ILBO-CKPT v1
//   meta <key> <value>                  (any number, value runs to end of line)
//   net <name> in=<n> hidden=<a,b,..|-> out=<n> act=linear|bounded ln=0|1
//       enc=<state_dim,state_width,action_width|none> count=<N> [lo=<..> hi=<..>]
//   <N values, 17 significant digits, whitespace separated, flat layout order>
//
// The net line is a single line; it is wrapped above for readability only.

#include "ilbo/diffnet.hpp"

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace ilbo {

inline constexpr const char* kCheckpointMagic = "ILBO-CKPT v1";

struct Checkpoint {
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<std::pair<std::string, NetParams>> networks;

    const NetParams& network(const std::string& name) const {
        for (const auto& [n, p] : networks)
            if (n == name) return p;
        throw std::out_of_range("checkpoint has no network '" + name + "'");
    }
    std::optional<std::string> find_meta(const std::string& key) const {
        for (const auto& [k, v] : meta)
            if (k == key) return v;
        return std::nullopt;
    }
};

inline std::string spec_line(const std::string& name, const NetSpec& spec) {
    std::string s = "net " + name + " in=" + std::to_string(spec.input_dim) + " hidden=";
    if (spec.hidden_layers.empty()) s += "-";
    for (std::size_t i = 0; i < spec.hidden_layers.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(spec.hidden_layers[i]);
    }
    s += " out=" + std::to_string(spec.output_dim);
    s += spec.output.kind == OutputActivation::Kind::bounded ? " act=bounded" : " act=linear";
    s += spec.use_layer_norm ? " ln=1" : " ln=0";
    if (spec.encoder)
        s += " enc=" + std::to_string(spec.encoder->state_dim) + "," + std::to_string(spec.encoder->state_width) + "," +
             std::to_string(spec.encoder->action_width);
    else
        s += " enc=none";
    s += " count=" + std::to_string(parameter_count(spec));
    if (spec.output.kind == OutputActivation::Kind::bounded)
        s += " lo=" + format_vector(spec.output.lo) + " hi=" + format_vector(spec.output.hi);
    return s;
}

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
    os << kCheckpointMagic << '\n';
    for (const auto& [k, v] : ck.meta) {
        if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos)
            throw std::invalid_argument("checkpoint meta key/value contains whitespace/newline: " + k);
        os << "meta " << k << ' ' << v << '\n';
    }
    for (const auto& [name, p] : ck.networks) {
        os << spec_line(name, p.spec) << '\n';
        for (Eigen::Index i = 0; i < p.values.size(); ++i) {
            os << format_double(p.values(i));
            os << ((i + 1) % 8 == 0 || i + 1 == p.values.size() ? '\n' : ' ');
        }
    }
    if (!os) throw std::runtime_error("checkpoint write failed");
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    write_checkpoint(os, ck);
}

namespace detail {

inline NetSpec parse_spec_fields(const std::map<std::string, std::string>& f, std::size_t& count) {
    auto get = [&](const std::string& k) -> const std::string& {
        auto it = f.find(k);
        if (it == f.end()) throw std::runtime_error("checkpoint net line lacks field '" + k + "'");
        return it->second;
    };
    NetSpec s;
    s.input_dim = static_cast<std::size_t>(parse_int(get("in")));
    if (get("hidden") != "-")
        for (const auto& h : split(get("hidden"), ',')) s.hidden_layers.push_back(static_cast<std::size_t>(parse_int(h)));
    s.output_dim = static_cast<std::size_t>(parse_int(get("out")));
    s.use_layer_norm = get("ln") == "1";
    if (get("enc") != "none") {
        auto e = split(get("enc"), ',');
        if (e.size() != 3) throw std::runtime_error("checkpoint: malformed enc field");
        s.encoder = Encoder{static_cast<std::size_t>(parse_int(e[0])), static_cast<std::size_t>(parse_int(e[1])),
                            static_cast<std::size_t>(parse_int(e[2]))};
    }
    if (get("act") == "bounded")
        s.output = OutputActivation::bounded(parse_vector(get("lo")), parse_vector(get("hi")));
    else if (get("act") != "linear")
        throw std::runtime_error("checkpoint: unknown output activation '" + get("act") + "'");
    count = static_cast<std::size_t>(parse_int(get("count")));
    s.validate();
    return s;
}

}  // namespace detail

inline Checkpoint read_checkpoint(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kCheckpointMagic)
        throw std::runtime_error("not an ILBO-CKPT v1 file (bad header line)");
    Checkpoint ck;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line.rfind("meta ", 0) == 0) {
            auto rest = line.substr(5);
            auto sp = rest.find(' ');
            if (sp == std::string::npos) throw std::runtime_error("checkpoint: malformed meta line");
            ck.meta.emplace_back(rest.substr(0, sp), rest.substr(sp + 1));
        } else if (line.rfind("net ", 0) == 0) {
            std::istringstream ls(line.substr(4));
            std::string name, tok;
            ls >> name;
            std::map<std::string, std::string> fields;
            while (ls >> tok) {
                auto eq = tok.find('=');
                if (eq == std::string::npos) throw std::runtime_error("checkpoint: malformed field '" + tok + "'");
                fields[tok.substr(0, eq)] = tok.substr(eq + 1);
            }
            std::size_t count = 0;
            NetSpec spec = detail::parse_spec_fields(fields, count);
            if (count != parameter_count(spec))
                throw std::runtime_error("checkpoint: count does not match layout for network '" + name + "'");
            NetParams p{spec, Vec(static_cast<Eigen::Index>(count))};
            for (std::size_t i = 0; i < count; ++i) {
                std::string t;
                if (!(is >> t)) throw std::runtime_error("checkpoint: truncated values for network '" + name + "'");
                p.values(static_cast<Eigen::Index>(i)) = parse_double(t);
            }
            if (!p.values.allFinite()) throw std::runtime_error("checkpoint: non-finite parameter in '" + name + "'");
            ck.networks.emplace_back(name, std::move(p));
        } else {
            throw std::runtime_error("checkpoint: unexpected line '" + line.substr(0, 40) + "'");
        }
    }
    return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    return read_checkpoint(is);
}

}  // namespace ilbo
