#include "dxagent/tools/schema.hpp"

#include <cmath>
#include <regex>
#include <set>

#include "dxagent/core/error.hpp"

namespace dxagent::schema {

using nlohmann::json;

namespace {

const std::set<std::string> kKeywords = {"type",     "properties",       "required",         "additionalProperties",
                                         "enum",     "minimum",          "maximum",          "exclusiveMinimum",
                                         "exclusiveMaximum", "pattern",  "items",            "minItems",
                                         "anyOf",    "title",            "description",      "default",
                                         "examples", "$schema",          "$id"};
const std::set<std::string> kTypes = {"object", "array", "string", "number", "integer", "boolean", "null"};

bool has_type(const json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "null") return v.is_null();
    if (type == "number") return v.is_number();
    if (type == "integer") {
        if (v.is_number_integer()) return true;
        if (!v.is_number_float()) return false;
        const double d = v.get<double>();
        return std::isfinite(d) && std::floor(d) == d;
    }
    return false;
}

std::vector<std::string> types_of(const json& schema) {
    if (!schema.contains("type")) return {};
    const json& t = schema["type"];
    if (t.is_string()) return {t.get<std::string>()};
    std::vector<std::string> out;
    for (const auto& x : t) out.push_back(x.get<std::string>());
    return out;
}

[[noreturn]] void bad(const std::string& path, const std::string& msg) {
    fail(ErrorCode::InvalidSchema, path + ": " + msg);
}

void check_at(const json& s, const std::string& path) {
    if (!s.is_object()) bad(path, "schema must be an object");
    for (const auto& [k, _] : s.items())
        if (!kKeywords.count(k)) bad(path, "unsupported keyword '" + k + "'");

    if (s.contains("type")) {
        const json& t = s["type"];
        if (t.is_string()) {
            if (!kTypes.count(t.get<std::string>())) bad(path, "unknown type '" + t.get<std::string>() + "'");
        } else if (t.is_array() && !t.empty()) {
            for (const auto& x : t)
                if (!x.is_string() || !kTypes.count(x.get<std::string>())) bad(path, "bad entry in type list");
        } else {
            bad(path, "type must be a string or non-empty array");
        }
    }
    for (const char* k : {"minimum", "maximum", "exclusiveMinimum", "exclusiveMaximum"})
        if (s.contains(k) && !s[k].is_number()) bad(path, std::string(k) + " must be a number");
    auto num = [&](const char* k) { return s.contains(k) ? std::optional<double>(s[k].get<double>()) : std::nullopt; };
    const auto lo = num("minimum"), hi = num("maximum"), xlo = num("exclusiveMinimum"), xhi = num("exclusiveMaximum");
    if (lo && hi && *lo > *hi) bad(path, "minimum exceeds maximum");
    if (xlo && hi && *xlo >= *hi) bad(path, "exclusiveMinimum leaves no admissible value below maximum");
    if (lo && xhi && *lo >= *xhi) bad(path, "minimum leaves no admissible value below exclusiveMaximum");
    if (xlo && xhi && *xlo >= *xhi) bad(path, "empty exclusive range");

    if (s.contains("pattern")) {
        if (!s["pattern"].is_string()) bad(path, "pattern must be a string");
        try {
            std::regex re(s["pattern"].get<std::string>(), std::regex::ECMAScript);
        } catch (const std::regex_error&) {
            bad(path, "pattern does not compile");
        }
    }
    if (s.contains("minItems") && (!s["minItems"].is_number_integer() || s["minItems"].get<long long>() < 0))
        bad(path, "minItems must be a non-negative integer");

    if (s.contains("properties")) {
        if (!s["properties"].is_object()) bad(path, "properties must be an object");
        for (const auto& [k, sub] : s["properties"].items()) check_at(sub, path + "/properties/" + k);
    }
    if (s.contains("additionalProperties")) {
        const json& ap = s["additionalProperties"];
        if (ap.is_object()) check_at(ap, path + "/additionalProperties");
        else if (!ap.is_boolean()) bad(path, "additionalProperties must be boolean or schema");
    }
    if (s.contains("required")) {
        if (!s["required"].is_array()) bad(path, "required must be an array");
        const bool closed = s.contains("additionalProperties") && s["additionalProperties"] == false;
        for (const auto& r : s["required"]) {
            if (!r.is_string()) bad(path, "required entries must be strings");
            if (closed && !(s.contains("properties") && s["properties"].contains(r.get<std::string>())))
                bad(path, "required property '" + r.get<std::string>() + "' is forbidden by additionalProperties=false");
        }
    }
    if (s.contains("items")) check_at(s["items"], path + "/items");
    if (s.contains("anyOf")) {
        if (!s["anyOf"].is_array() || s["anyOf"].empty()) bad(path, "anyOf must be a non-empty array");
        for (std::size_t i = 0; i < s["anyOf"].size(); ++i) check_at(s["anyOf"][i], path + "/anyOf/" + std::to_string(i));
    }
    if (s.contains("enum")) {
        if (!s["enum"].is_array() || s["enum"].empty()) bad(path, "enum must be a non-empty array");
        const auto types = types_of(s);
        for (const auto& v : s["enum"]) {
            if (types.empty()) break;
            bool ok = false;
            for (const auto& t : types) ok = ok || has_type(v, t);
            if (!ok) bad(path, "enum value " + v.dump() + " contradicts the declared type");
        }
    }
}

bool required_only(const json& s) {
    for (const auto& [k, _] : s.items())
        if (k != "required" && k != "description" && k != "title") return false;
    return s.contains("required");
}

void validate_at(const json& s, const json& v, const std::string& path, std::vector<std::string>& errors) {
    const auto types = types_of(s);
    if (!types.empty()) {
        bool ok = false;
        for (const auto& t : types) ok = ok || has_type(v, t);
        if (!ok) {
            std::string expected;
            for (const auto& t : types) expected += (expected.empty() ? "" : "|") + t;
            errors.push_back(path + ": expected " + expected + ", got " + v.type_name());
            return;
        }
    }
    if (s.contains("enum")) {
        bool found = false;
        for (const auto& e : s["enum"]) found = found || e == v;
        if (!found) errors.push_back(path + ": value " + v.dump() + " not in enum " + s["enum"].dump());
    }
    if (v.is_number()) {
        const double d = v.get<double>();
        if (s.contains("minimum") && d < s["minimum"].get<double>())
            errors.push_back(path + ": must be >= " + s["minimum"].dump());
        if (s.contains("maximum") && d > s["maximum"].get<double>())
            errors.push_back(path + ": must be <= " + s["maximum"].dump());
        if (s.contains("exclusiveMinimum") && d <= s["exclusiveMinimum"].get<double>())
            errors.push_back(path + ": must be > " + s["exclusiveMinimum"].dump());
        if (s.contains("exclusiveMaximum") && d >= s["exclusiveMaximum"].get<double>())
            errors.push_back(path + ": must be < " + s["exclusiveMaximum"].dump());
    }
    if (v.is_string() && s.contains("pattern")) {
        std::regex re(s["pattern"].get<std::string>(), std::regex::ECMAScript);
        if (!std::regex_search(v.get<std::string>(), re))
            errors.push_back(path + ": does not match pattern " + s["pattern"].get<std::string>());
    }
    if (v.is_object()) {
        if (s.contains("required"))
            for (const auto& r : s["required"])
                if (!v.contains(r.get<std::string>()))
                    errors.push_back(path + ": missing required input '" + r.get<std::string>() + "'");
        const json props = s.value("properties", json::object());
        for (const auto& [k, sub] : v.items()) {
            if (props.contains(k)) {
                validate_at(props[k], sub, path + "." + k, errors);
            } else if (s.contains("additionalProperties")) {
                const json& ap = s["additionalProperties"];
                if (ap == false) errors.push_back(path + ": unexpected property '" + k + "'");
                else if (ap.is_object()) validate_at(ap, sub, path + "." + k, errors);
            }
        }
    }
    if (v.is_array()) {
        if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
            errors.push_back(path + ": needs at least " + s["minItems"].dump() + " items");
        if (s.contains("items"))
            for (std::size_t i = 0; i < v.size(); ++i) validate_at(s["items"], v[i], path + "[" + std::to_string(i) + "]", errors);
    }
    if (s.contains("anyOf")) {
        bool any = false;
        for (const auto& alt : s["anyOf"]) {
            std::vector<std::string> sub;
            validate_at(alt, v, path, sub);
            if (sub.empty()) {
                any = true;
                break;
            }
        }
        if (!any) {
            bool all_required = true;
            std::string names;
            for (const auto& alt : s["anyOf"]) {
                all_required = all_required && required_only(alt);
                if (alt.contains("required"))
                    for (const auto& r : alt["required"]) names += (names.empty() ? "" : ", ") + r.get<std::string>();
            }
            errors.push_back(all_required ? path + ": missing required input (one of " + names + ")"
                                          : path + ": matches none of the allowed forms");
        }
    }
}

}  // namespace

void check(const json& schema) { check_at(schema, "$"); }

std::vector<std::string> validate(const json& schema, const json& value) {
    std::vector<std::string> errors;
    validate_at(schema, value, "$", errors);
    return errors;
}

}  // namespace dxagent::schema
