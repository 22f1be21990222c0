#include "swarmcmd/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "swarmcmd/swarm_sim.hpp"
#include "embedded_data.hpp"

namespace swarmcmd::datagen {

namespace {

std::vector<std::string> string_list(const nlohmann::json& doc, const std::string& what)
{
    if (!doc.is_array())
        throw DatagenError(what + " must be an array of strings");
    std::vector<std::string> out;
    for (const auto& item : doc)
    {
        if (!item.is_string() || item.get<std::string>().empty())
            throw DatagenError(what + " must contain non-empty strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

std::string substitute(std::string text, const std::string& slot, const std::string& value)
{
    const std::string key = "{" + slot + "}";
    for (std::size_t pos = text.find(key); pos != std::string::npos;
         pos = text.find(key, pos + value.size()))
        text.replace(pos, key.size(), value);
    return text;
}

bool has_slot(const std::string& pattern, const char* slot)
{
    return pattern.find(std::string("{") + slot + "}") != std::string::npos;
}

} // namespace

void TemplateBank::validate(const bt::NodeWhitelist& whitelist) const
{
    if (behaviors.empty())
        throw DatagenError("template bank has no behaviors");
    std::vector<std::string> seen;
    for (const auto& b : behaviors)
    {
        if (std::find(seen.begin(), seen.end(), b.name) != seen.end())
            throw DatagenError("behavior '" + b.name + "' listed twice");
        seen.push_back(b.name);
        const auto kind = whitelist.kind_of(b.name);
        if (!kind)
            throw DatagenError("behavior '" + b.name + "' is not in the whitelist");
        if (*kind != b.kind)
            throw DatagenError("behavior '" + b.name + "' has the wrong kind");
        if (!(b.weight > 0.0) || !std::isfinite(b.weight))
            throw DatagenError("behavior '" + b.name + "' needs a positive weight");
        if (b.phrases.empty())
            throw DatagenError("behavior '" + b.name + "' has no phrases");

        const bt::LeafSpec* spec = whitelist.find(b.name);
        for (const auto& p : spec->params)
        {
            const auto it = b.params.find(p.key);
            if (it == b.params.end() || it->second.empty())
                throw DatagenError("behavior '" + b.name + "' needs values for '" + p.key + "'");
        }
        for (const auto& [key, values] : b.params)
        {
            for (const auto& v : values)
            {
                bt::Params probe;
                for (const auto& [k, vs] : b.params)
                    probe[k] = vs.front();
                probe[key] = v;
                if (!whitelist.check_params(b.name, probe).empty())
                    throw DatagenError("behavior '" + b.name + "' has illegal " + key + " '" +
                                       v + "'");
            }
        }
    }
    const auto need = [](const std::vector<std::string>& list, const char* name,
                         std::initializer_list<const char*> slots) {
        if (list.empty())
            throw DatagenError(std::string("connectives.") + name + " is empty");
        for (const auto& pattern : list)
            for (const char* slot : slots)
                if (!has_slot(pattern, slot))
                    throw DatagenError(std::string("connective '") + pattern + "' lacks {" +
                                       slot + "}");
    };
    need(connectives.check, "check", {"cond"});
    need(connectives.guard, "guard", {"cond", "a"});
    need(connectives.sequence, "sequence", {"a", "b"});
    need(connectives.fallback, "fallback", {"a", "b"});
    need(connectives.unless, "unless", {"cond", "b"});
}

TemplateBank TemplateBank::from_json(const nlohmann::json& doc)
{
    if (!doc.is_object())
        throw DatagenError("template bank must be a JSON object");
    TemplateBank bank;
    bank.version = doc.value("version", std::string("unversioned"));
    const auto behaviors = doc.find("behaviors");
    if (behaviors == doc.end() || !behaviors->is_array())
        throw DatagenError("template bank needs a \"behaviors\" array");
    for (const auto& item : *behaviors)
    {
        if (!item.is_object() || !item.contains("name") || !item["name"].is_string())
            throw DatagenError("each behavior needs a string \"name\"");
        BehaviorTemplate b;
        b.name = item["name"].get<std::string>();
        const std::string kind = item.value("kind", std::string());
        if (kind == "action")
            b.kind = bt::NodeKind::ActionLeaf;
        else if (kind == "condition")
            b.kind = bt::NodeKind::ConditionLeaf;
        else
            throw DatagenError("behavior '" + b.name + "' kind must be action or condition");
        const auto weight = item.find("weight");
        if (weight != item.end())
        {
            if (!weight->is_number())
                throw DatagenError("behavior '" + b.name + "' weight must be a number");
            b.weight = weight->get<double>();
        }
        b.phrases = string_list(item.value("phrases", nlohmann::json::array()),
                                "phrases of " + b.name);
        if (const auto params = item.find("params"); params != item.end())
        {
            if (!params->is_object())
                throw DatagenError("params of " + b.name + " must be an object");
            for (const auto& [key, values] : params->items())
                b.params[key] = string_list(values, "params." + key + " of " + b.name);
        }
        bank.behaviors.push_back(std::move(b));
    }
    const auto conn = doc.value("connectives", nlohmann::json::object());
    if (!conn.is_object())
        throw DatagenError("connectives must be an object");
    auto list = [&](const char* key) {
        return string_list(conn.value(key, nlohmann::json::array()),
                           std::string("connectives.") + key);
    };
    bank.connectives.check = list("check");
    bank.connectives.guard = list("guard");
    bank.connectives.sequence = list("sequence");
    bank.connectives.fallback = list("fallback");
    bank.connectives.unless = list("unless");
    return bank;
}

TemplateBank TemplateBank::load(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DatagenError("cannot open template bank '" + path + "'");
    try
    {
        return from_json(nlohmann::json::parse(in));
    }
    catch (const nlohmann::json::exception& e)
    {
        throw DatagenError("template bank '" + path + "': " + e.what());
    }
}

nlohmann::json TemplateBank::to_json() const
{
    nlohmann::json list = nlohmann::json::array();
    for (const auto& b : behaviors)
    {
        nlohmann::json item{{"name", b.name},
                            {"kind", b.kind == bt::NodeKind::ActionLeaf ? "action" : "condition"},
                            {"weight", b.weight},
                            {"phrases", b.phrases}};
        if (!b.params.empty())
            item["params"] = b.params;
        list.push_back(std::move(item));
    }
    return {{"version", version},
            {"behaviors", list},
            {"connectives",
             {{"check", connectives.check},
              {"guard", connectives.guard},
              {"sequence", connectives.sequence},
              {"fallback", connectives.fallback},
              {"unless", connectives.unless}}}};
}

std::map<std::string, double> TemplateBank::weight_shares() const
{
    double total = 0.0;
    for (const auto& b : behaviors)
        total += b.weight;
    std::map<std::string, double> out;
    for (const auto& b : behaviors)
        out[b.name] = b.weight / total;
    return out;
}

const TemplateBank& default_bank()
{
    static const TemplateBank bank = TemplateBank::from_json(
        nlohmann::json::parse(std::string_view(detail::kDefaultTemplateBank)));
    return bank;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index)
{
    // splitmix64 finalizer over the combined value.
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

class Draw
{
public:
    explicit Draw(std::uint64_t seed) : rng_(seed) {}

    std::size_t index(std::size_t n)
    {
        const auto i = static_cast<std::size_t>(rng_.uniform() * static_cast<double>(n));
        return std::min(i, n - 1);
    }

    const std::string& pick(const std::vector<std::string>& items) { return items[index(items.size())]; }

    std::size_t weighted(const std::vector<double>& cumulative)
    {
        const double u = rng_.uniform() * cumulative.back();
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
    }

private:
    sim::Rng rng_;
};

struct Leaf
{
    const BehaviorTemplate* tmpl;
    bt::BtNode node;
    std::string phrase; // imperative for actions, clause for conditions

    [[nodiscard]] bool is_condition() const { return tmpl->kind == bt::NodeKind::ConditionLeaf; }
};

Leaf make_leaf(const BehaviorTemplate& tmpl, Draw& draw)
{
    Leaf leaf{&tmpl, {}, draw.pick(tmpl.phrases)};
    bt::Params params;
    for (const auto& [key, values] : tmpl.params)
    {
        const std::string& value = draw.pick(values);
        params[key] = value;
        leaf.phrase = substitute(leaf.phrase, key, value);
    }
    leaf.node = tmpl.kind == bt::NodeKind::ActionLeaf ? bt::action(tmpl.name, params)
                                                      : bt::condition(tmpl.name);
    return leaf;
}

std::string fill(std::string pattern, const std::string& a, const std::string& b,
                 const std::string& cond)
{
    pattern = substitute(std::move(pattern), "a", a);
    pattern = substitute(std::move(pattern), "b", b);
    return substitute(std::move(pattern), "cond", cond);
}

// A leaf phrased as a standalone step inside a larger instruction.
std::string step_phrase(const Leaf& leaf, const Connectives& c, Draw& draw)
{
    return leaf.is_condition() ? fill(draw.pick(c.check), "", "", leaf.phrase) : leaf.phrase;
}

std::string sequence_phrase(const std::vector<Leaf>& leaves, const Connectives& c, Draw& draw)
{
    if (leaves.size() == 1)
        return step_phrase(leaves.front(), c, draw);
    if (leaves.front().is_condition())
    {
        std::vector<Leaf> rest(leaves.begin() + 1, leaves.end());
        return fill(draw.pick(c.guard), sequence_phrase(rest, c, draw), "", leaves.front().phrase);
    }
    std::string out = step_phrase(leaves.front(), c, draw);
    for (std::size_t i = 1; i < leaves.size(); ++i)
    {
        std::vector<std::string> patterns;
        for (const auto& p : c.sequence)
        {
            if (i == 1 || p.rfind("first ", 0) != 0)
                patterns.push_back(p);
        }
        if (patterns.empty())
            patterns = c.sequence;
        out = fill(draw.pick(patterns), out, step_phrase(leaves[i], c, draw), "");
    }
    return out;
}

std::string capitalize(std::string s)
{
    if (!s.empty())
        s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

} // namespace

std::vector<CorpusPair> generate_corpus(std::size_t n, std::uint64_t seed, const TemplateBank& bank,
                                        const bt::NodeWhitelist& whitelist)
{
    if (n == 0)
        throw DatagenError("corpus size must be at least 1");
    bank.validate(whitelist);

    std::vector<double> cumulative;
    double acc = 0.0;
    for (const auto& b : bank.behaviors)
        cumulative.push_back(acc += b.weight);

    const std::size_t width = std::max<std::size_t>(5, std::to_string(n).size());
    std::vector<CorpusPair> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        Draw draw(derive_seed(seed, i));
        const std::size_t count = 1 + draw.index(3);
        std::vector<Leaf> leaves;
        for (std::size_t k = 0; k < count; ++k)
            leaves.push_back(make_leaf(bank.behaviors[draw.weighted(cumulative)], draw));

        const Connectives& c = bank.connectives;
        bt::BtNode root;
        std::string instruction;
        auto nodes = [](const std::vector<Leaf>& ls) {
            std::vector<bt::BtNode> out_nodes;
            for (const auto& l : ls)
                out_nodes.push_back(l.node);
            return out_nodes;
        };
        if (count == 1)
        {
            root = leaves[0].node;
            instruction = step_phrase(leaves[0], c, draw);
        }
        else if (draw.index(2) == 0)
        {
            root = bt::sequence(nodes(leaves));
            instruction = sequence_phrase(leaves, c, draw);
        }
        else if (count == 2)
        {
            root = bt::fallback(nodes(leaves));
            if (leaves[0].is_condition())
                instruction = fill(draw.pick(c.unless), "", step_phrase(leaves[1], c, draw),
                                   leaves[0].phrase);
            else
                instruction = fill(draw.pick(c.fallback), leaves[0].phrase,
                                   step_phrase(leaves[1], c, draw), "");
        }
        else
        {
            const std::vector<Leaf> first(leaves.begin(), leaves.begin() + 2);
            root = bt::fallback({bt::sequence(nodes(first)), leaves[2].node});
            instruction = fill(draw.pick(c.fallback), sequence_phrase(first, c, draw),
                               step_phrase(leaves[2], c, draw), "");
        }

        char id[32];
        std::snprintf(id, sizeof id, "syn-%0*zu", static_cast<int>(width), i + 1);
        out.push_back({id, capitalize(instruction),
                       bt::serialize_tree(bt::make_tree(std::move(root)), whitelist)});
    }
    return out;
}

std::map<std::string, std::size_t> behavior_histogram(const std::vector<CorpusPair>& corpus)
{
    std::map<std::string, std::size_t> counts;
    for (const auto& pair : corpus)
    {
        const auto report = bt::parse_document(pair.reference_xml);
        if (!report.accepted())
            throw DatagenError("record '" + pair.id + "' has an invalid reference tree");
        bt::for_each_leaf(report.tree->root_node, [&](const bt::BtNode& leaf) { ++counts[leaf.name]; });
    }
    return counts;
}

void write_jsonl(std::ostream& out, const std::vector<CorpusPair>& corpus)
{
    for (const auto& pair : corpus)
    {
        const nlohmann::json line{
            {"id", pair.id}, {"instruction", pair.instruction}, {"reference_xml", pair.reference_xml}};
        out << line.dump() << "\n";
    }
}

Split split_corpus(const std::vector<CorpusPair>& corpus, std::uint64_t seed)
{
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    Draw draw(derive_seed(seed, 0xC0FFEE));
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[draw.index(i)]);

    const std::size_t n_train = corpus.size() * 8 / 10;
    const std::size_t n_val = corpus.size() / 10;
    Split split;
    for (std::size_t k = 0; k < order.size(); ++k)
    {
        const auto& pair = corpus[order[k]];
        if (k < n_train)
            split.train.push_back(pair);
        else if (k < n_train + n_val)
            split.validation.push_back(pair);
        else
            split.test.push_back(pair);
    }
    return split;
}

} // namespace swarmcmd::datagen
