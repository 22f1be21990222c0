#pragma once

// Minimal strict XML reader used by the behavior-tree gate.
//
// Only what the gate needs: elements, attributes, character data, comments,
// processing instructions, CDATA and the predefined/numeric entities. Any
// deviation from XML 1.0 well-formedness is reported as a ParseError with a
// line/column location. DOCTYPE declarations are refused.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace swarmcmd::xml {

struct Location
{
    int line = 1;
    int column = 1;
};

std::string to_string(Location loc);

struct Attribute
{
    std::string name;
    std::string value;
    Location loc;
};

struct Element
{
    std::string name;
    std::vector<Attribute> attributes;
    std::vector<Element> children;
    // Location of the first non-whitespace character data directly inside
    // this element, if there is any.
    std::optional<Location> text;
    Location loc;

    [[nodiscard]] const Attribute* find_attribute(std::string_view key) const;
};

struct ParseError
{
    std::string message;
    Location loc;
};

struct ParseResult
{
    std::optional<Element> root;
    std::optional<ParseError> error;

    [[nodiscard]] bool ok() const { return root.has_value(); }
};

inline constexpr std::size_t kDefaultMaxDepth = 256;

/// Parses a complete document. Never throws on malformed input.
ParseResult parse(std::string_view text, std::size_t max_depth = kDefaultMaxDepth);

bool is_name_start(unsigned char c);
bool is_name_char(unsigned char c);
bool is_valid_name(std::string_view name);

std::string escape_attribute(std::string_view value);

} // namespace swarmcmd::xml
