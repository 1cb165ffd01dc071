#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "retarget/descriptor.hpp"
#include "retarget/error.hpp"
#include "retarget/file_io.hpp"
#include "retarget/geom.hpp"
#include "retarget/robot.hpp"

namespace retarget {

// ---------------------------------------------------------------------------
// Command files
// ---------------------------------------------------------------------------
//
// JSON:
//   {"robot": "<model name>", "fps": 20,
//    "joint_order": [21 command joint names],
//    "frames": [[21 radians], ...],
//    "loss": [per-frame NPR loss]           (optional)
//    "orientation": [[w, x, y, z], ...]}    (optional base orientation)

struct CommandFile {
    std::string robot;
    double fps = 20.0;
    std::vector<CommandVector> frames;
    std::vector<double> loss;
    std::vector<Quat> orientation;
};

inline std::vector<std::string> command_joint_names(const RobotModel& model) {
    std::vector<std::string> out;
    for (int k = 0; k < kCommandDims; ++k) out.push_back(model.command_joint(k).name);
    return out;
}

// %.17g round-trips doubles exactly.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// JSON has no NaN or Inf; they are written as null.
inline std::string json_number(double v) { return std::isfinite(v) ? format_double(v) : "null"; }

inline std::string serialize_commands(const CommandFile& cf, const RobotModel& model) {
    std::ostringstream out;
    out << "{\"robot\": " << nlohmann::json(cf.robot).dump() << ", \"fps\": " << format_double(cf.fps)
        << ",\n\"joint_order\": " << nlohmann::json(command_joint_names(model)).dump() << ",\n\"frames\": [\n";
    for (std::size_t f = 0; f < cf.frames.size(); ++f) {
        out << "[";
        for (std::size_t k = 0; k < kCommandDims; ++k) out << (k ? ", " : "") << format_double(cf.frames[f][k]);
        out << (f + 1 < cf.frames.size() ? "],\n" : "]\n");
    }
    out << "]";
    if (!cf.loss.empty()) {
        out << ",\n\"loss\": [";
        for (std::size_t f = 0; f < cf.loss.size(); ++f) out << (f ? ", " : "") << json_number(cf.loss[f]);
        out << "]";
    }
    if (!cf.orientation.empty()) {
        out << ",\n\"orientation\": [";
        for (std::size_t f = 0; f < cf.orientation.size(); ++f) {
            const Quat& q = cf.orientation[f];
            out << (f ? ", " : "") << "[" << format_double(q.w) << ", " << format_double(q.x) << ", "
                << format_double(q.y) << ", " << format_double(q.z) << "]";
        }
        out << "]";
    }
    out << "}\n";
    return out.str();
}

inline void save_commands(const std::filesystem::path& path, const CommandFile& cf, const RobotModel& model) {
    write_file_atomic(path, serialize_commands(cf, model));
}

inline CommandFile parse_commands(const std::string& text, const RobotModel& model) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("command file is not valid JSON (") + e.what() + ")");
    }
    if (!doc.is_object()) throw ParseError("command file: top level must be an object");

    CommandFile cf;
    try {
        cf.robot = doc.at("robot").get<std::string>();
        cf.fps = doc.at("fps").get<double>();
        const auto order = doc.at("joint_order").get<std::vector<std::string>>();
        if (order != command_joint_names(model)) {
            throw ParseError("command file: joint_order does not match the command order of robot '" + model.name +
                             "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("command file header: ") + e.what());
    }
    if (cf.robot != model.name) {
        throw ParseError("command file is for robot '" + cf.robot + "', configured robot is '" + model.name + "'");
    }
    if (!(cf.fps > 0.0) || !std::isfinite(cf.fps)) throw ParseError("command file: fps must be > 0");
    if (!doc.contains("frames") || !doc["frames"].is_array() || doc["frames"].empty()) {
        throw ParseError("command file: missing or empty \"frames\" array");
    }

    const auto& frames = doc["frames"];
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const std::string where = "command file frame " + std::to_string(f);
        const auto& jf = frames[f];
        if (!jf.is_array() || jf.size() != kCommandDims) {
            throw ParseError(where + ": expected an array of 21 numbers");
        }
        CommandVector c{};
        for (std::size_t k = 0; k < kCommandDims; ++k) {
            if (!jf[k].is_number()) throw ParseError(where + ": entry " + std::to_string(k) + " is not a number");
            c[k] = jf[k].get<double>();
        }
        cf.frames.push_back(c);
    }
    if (doc.contains("loss")) {
        const auto& jl = doc["loss"];
        if (!jl.is_array() || jl.size() != frames.size()) {
            throw ParseError("command file: \"loss\" must have one entry per frame");
        }
        for (const auto& v : jl) {
            // non-finite losses of failed frames serialize as null
            cf.loss.push_back(v.is_number() ? v.get<double>() : std::nan(""));
        }
    }
    if (doc.contains("orientation")) {
        const auto& jo = doc["orientation"];
        if (!jo.is_array() || jo.size() != frames.size()) {
            throw ParseError("command file: \"orientation\" must have one entry per frame");
        }
        for (std::size_t f = 0; f < jo.size(); ++f) {
            const auto& q = jo[f];
            if (!q.is_array() || q.size() != 4 || !q[0].is_number() || !q[1].is_number() || !q[2].is_number() ||
                !q[3].is_number()) {
                throw ParseError("command file orientation " + std::to_string(f) + ": expected [w, x, y, z]");
            }
            const Quat o{q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()};
            if (!is_unit(o, 1e-6)) {
                throw ParseError("command file orientation " + std::to_string(f) + " is not a unit quaternion");
            }
            cf.orientation.push_back(o);
        }
    }
    return cf;
}

inline CommandFile load_commands(const std::filesystem::path& path, const RobotModel& model) {
    return parse_commands(read_file(path), model);
}

// ---------------------------------------------------------------------------
// Descriptor datasets
// ---------------------------------------------------------------------------
//
// Text, one 28-value descriptor per line in flatten() order; blank lines and
// lines starting with '#' are skipped.

inline std::string serialize_descriptors(const std::vector<DescriptorVector>& ds) {
    std::string out = "# retarget descriptors: per limb (L-arm, R-arm, L-leg, R-leg) qw qx qy qz dx dy dz\n";
    for (const DescriptorVector& d : ds) {
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (i) out += ' ';
            out += format_double(d[i]);
        }
        out += '\n';
    }
    return out;
}

inline void save_descriptors(const std::filesystem::path& path, const std::vector<DescriptorVector>& ds) {
    write_file_atomic(path, serialize_descriptors(ds));
}

inline std::vector<DescriptorVector> parse_descriptors(const std::string& text) {
    std::vector<DescriptorVector> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const std::string where = "descriptor line " + std::to_string(lineno);
        std::istringstream ls(line);
        DescriptorVector d{};
        for (std::size_t i = 0; i < d.size(); ++i) {
            std::string tok;
            if (!(ls >> tok)) throw ParseError(where + ": expected 28 values, got " + std::to_string(i));
            try {
                std::size_t used = 0;
                d[i] = std::stod(tok, &used);
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw ParseError(where + ": '" + tok + "' is not a number");
            }
        }
        std::string extra;
        if (ls >> extra) throw ParseError(where + ": more than 28 values");
        try {
            validate_descriptor(d);
        } catch (const ValidationError& e) {
            throw ParseError(where + ": " + e.what());
        }
        out.push_back(d);
    }
    return out;
}

inline std::vector<DescriptorVector> load_descriptors(const std::filesystem::path& path) {
    return parse_descriptors(read_file(path));
}

}  // namespace retarget
