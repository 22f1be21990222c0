#include "swarmcmd/xml.hpp"

#include <cstdint>
#include <utility>

namespace swarmcmd::xml {

std::string to_string(Location loc)
{
    return std::to_string(loc.line) + ":" + std::to_string(loc.column);
}

const Attribute* Element::find_attribute(std::string_view key) const
{
    for (const auto& attr : attributes)
    {
        if (attr.name == key)
            return &attr;
    }
    return nullptr;
}

bool is_name_start(unsigned char c)
{
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' ||
           c == ':' || c >= 0x80;
}

bool is_name_char(unsigned char c)
{
    return is_name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.';
}

bool is_valid_name(std::string_view name)
{
    if (name.empty() || !is_name_start(static_cast<unsigned char>(name[0])))
        return false;
    for (char c : name)
    {
        if (!is_name_char(static_cast<unsigned char>(c)))
            return false;
    }
    return true;
}

std::string escape_attribute(std::string_view value)
{
    std::string out;
    out.reserve(value.size());
    for (char c : value)
    {
        switch (c)
        {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c; break;
        }
    }
    return out;
}

namespace {

bool is_xml_char(std::uint32_t cp)
{
    return cp == 0x9 || cp == 0xA || cp == 0xD || (cp >= 0x20 && cp <= 0xD7FF) ||
           (cp >= 0xE000 && cp <= 0xFFFD) || (cp >= 0x10000 && cp <= 0x10FFFF);
}

void append_utf8(std::string& out, std::uint32_t cp)
{
    if (cp < 0x80)
    {
        out += static_cast<char>(cp);
    }
    else if (cp < 0x800)
    {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
    else if (cp < 0x10000)
    {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
    else
    {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

// Decodes one UTF-8 sequence at `i`. Returns the byte length, or 0 when the
// sequence is invalid (truncated, overlong, surrogate, out of range).
std::size_t decode_utf8(std::string_view s, std::size_t i, std::uint32_t& cp)
{
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t min = 0;
    if (b0 < 0x80)
    {
        cp = b0;
        return 1;
    }
    if ((b0 & 0xE0) == 0xC0)
    {
        len = 2;
        cp = b0 & 0x1F;
        min = 0x80;
    }
    else if ((b0 & 0xF0) == 0xE0)
    {
        len = 3;
        cp = b0 & 0x0F;
        min = 0x800;
    }
    else if ((b0 & 0xF8) == 0xF0)
    {
        len = 4;
        cp = b0 & 0x07;
        min = 0x10000;
    }
    else
    {
        return 0;
    }
    if (i + len > s.size())
        return 0;
    for (std::size_t k = 1; k < len; ++k)
    {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80)
            return 0;
        cp = (cp << 6) | (b & 0x3F);
    }
    if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
        return 0;
    return len;
}

bool is_space(char c)
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r';
}

struct Failure
{
    ParseError error;
};

class Parser
{
public:
    Parser(std::string_view text, std::size_t max_depth)
        : text_(text), max_depth_(max_depth)
    {
    }

    ParseResult run()
    {
        ParseResult result;
        try
        {
            check_encoding();
            result.root = document();
        }
        catch (Failure& f)
        {
            result.root.reset();
            result.error = std::move(f.error);
        }
        return result;
    }

private:
    [[noreturn]] void fail(std::string message, Location loc) const
    {
        throw Failure{ParseError{std::move(message), loc}};
    }
    [[noreturn]] void fail(std::string message) const { fail(std::move(message), here()); }

    Location here() const { return {line_, column_}; }
    bool at_end() const { return pos_ >= text_.size(); }
    char peek(std::size_t ahead = 0) const
    {
        return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
    }
    bool looking_at(std::string_view s) const { return text_.substr(pos_, s.size()) == s; }

    void advance(std::size_t n = 1)
    {
        for (std::size_t k = 0; k < n && pos_ < text_.size(); ++k, ++pos_)
        {
            if (text_[pos_] == '\n')
            {
                ++line_;
                column_ = 1;
            }
            else if ((static_cast<unsigned char>(text_[pos_]) & 0xC0) != 0x80)
            {
                ++column_;
            }
        }
    }

    void skip_space()
    {
        while (!at_end() && is_space(peek()))
            advance();
    }

    void expect(std::string_view s, const char* what)
    {
        if (!looking_at(s))
            fail(std::string("expected ") + what);
        advance(s.size());
    }

    void check_encoding() const
    {
        int line = 1;
        int column = 1;
        for (std::size_t i = 0; i < text_.size();)
        {
            std::uint32_t cp = 0;
            const std::size_t len = decode_utf8(text_, i, cp);
            if (len == 0)
                fail("invalid UTF-8 byte sequence", {line, column});
            if (!is_xml_char(cp))
                fail("character not allowed in XML", {line, column});
            if (cp == '\n')
            {
                ++line;
                column = 1;
            }
            else
            {
                ++column;
            }
            i += len;
        }
    }

    Element document()
    {
        if (looking_at("\xEF\xBB\xBF"))
            advance(3);
        if (looking_at("<?xml") && (is_space(peek(5)) || peek(5) == '?'))
            xml_declaration();
        misc();
        if (at_end())
            fail("document has no root element");
        if (peek() != '<' || !is_name_start(static_cast<unsigned char>(peek(1))))
            fail("character data before the root element");
        Element root = element_tree();
        misc();
        if (!at_end())
        {
            if (peek() == '<' && is_name_start(static_cast<unsigned char>(peek(1))))
                fail("more than one root element");
            fail("content after the root element");
        }
        return root;
    }

    void xml_declaration()
    {
        const Location start = here();
        const auto end = text_.find("?>", pos_);
        if (end == std::string_view::npos)
            fail("unterminated XML declaration", start);
        const auto body = text_.substr(pos_ + 5, end - pos_ - 5);
        if (body.find("version") == std::string_view::npos)
            fail("XML declaration lacks a version", start);
        advance(end + 2 - pos_);
    }

    void misc()
    {
        for (;;)
        {
            skip_space();
            if (looking_at("<!--"))
                comment();
            else if (looking_at("<?"))
                processing_instruction();
            else if (looking_at("<!DOCTYPE"))
                fail("DOCTYPE declarations are not supported");
            else
                return;
        }
    }

    void comment()
    {
        const Location start = here();
        advance(4);
        const auto dashes = text_.find("--", pos_);
        if (dashes == std::string_view::npos)
            fail("unterminated comment", start);
        advance(dashes - pos_);
        if (peek(2) != '>')
            fail("'--' is not allowed inside a comment");
        advance(3);
    }

    void processing_instruction()
    {
        const Location start = here();
        advance(2);
        std::string target = name("processing instruction target");
        std::string lowered = target;
        for (auto& c : lowered)
            c = static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
        if (lowered == "xml")
            fail("XML declaration is only allowed at the start of the document", start);
        const auto end = text_.find("?>", pos_);
        if (end == std::string_view::npos)
            fail("unterminated processing instruction", start);
        if (end != pos_ && !is_space(peek()))
            fail("malformed processing instruction");
        advance(end + 2 - pos_);
    }

    std::string name(const char* what)
    {
        if (at_end() || !is_name_start(static_cast<unsigned char>(peek())))
            fail(std::string("expected ") + what);
        const std::size_t start = pos_;
        while (!at_end() && is_name_char(static_cast<unsigned char>(peek())))
            advance();
        return std::string(text_.substr(start, pos_ - start));
    }

    // Parses a reference after '&' and appends the decoded text.
    void reference(std::string& out)
    {
        const Location start = here();
        advance();
        if (peek() == '#')
        {
            advance();
            const bool hex = peek() == 'x';
            if (hex)
                advance();
            std::uint32_t cp = 0;
            std::size_t digits = 0;
            while (!at_end() && peek() != ';')
            {
                const char c = peek();
                int d = -1;
                if (c >= '0' && c <= '9')
                    d = c - '0';
                else if (hex && c >= 'a' && c <= 'f')
                    d = c - 'a' + 10;
                else if (hex && c >= 'A' && c <= 'F')
                    d = c - 'A' + 10;
                if (d < 0)
                    fail("invalid character reference", start);
                cp = cp * (hex ? 16u : 10u) + static_cast<std::uint32_t>(d);
                if (cp > 0x10FFFF)
                    fail("character reference out of range", start);
                ++digits;
                advance();
            }
            if (at_end() || digits == 0)
                fail("invalid character reference", start);
            advance();
            if (!is_xml_char(cp))
                fail("character reference to a disallowed character", start);
            append_utf8(out, cp);
            return;
        }
        const std::size_t begin = pos_;
        while (!at_end() && is_name_char(static_cast<unsigned char>(peek())))
            advance();
        const auto entity = text_.substr(begin, pos_ - begin);
        if (peek() != ';')
            fail("unterminated entity reference", start);
        advance();
        if (entity == "lt")
            out += '<';
        else if (entity == "gt")
            out += '>';
        else if (entity == "amp")
            out += '&';
        else if (entity == "apos")
            out += '\'';
        else if (entity == "quot")
            out += '"';
        else
            fail("undefined entity '" + std::string(entity) + "'", start);
    }

    // Parses '<name attr="v" ...' up to and including '>' or '/>'.
    Element start_tag(bool& self_closing)
    {
        Element el;
        el.loc = here();
        advance();
        el.name = name("element name");
        for (;;)
        {
            const bool spaced = !at_end() && is_space(peek());
            skip_space();
            if (at_end())
                fail("unterminated start tag <" + el.name + ">", el.loc);
            if (peek() == '>')
            {
                advance();
                self_closing = false;
                return el;
            }
            if (looking_at("/>"))
            {
                advance(2);
                self_closing = true;
                return el;
            }
            if (!spaced)
                fail("expected whitespace before attribute");
            Attribute attr;
            attr.loc = here();
            attr.name = name("attribute name");
            skip_space();
            expect("=", "'=' after attribute name");
            skip_space();
            const char quote = peek();
            if (quote != '"' && quote != '\'')
                fail("attribute value must be quoted");
            advance();
            for (;;)
            {
                if (at_end())
                    fail("unterminated attribute value", attr.loc);
                const char c = peek();
                if (c == quote)
                {
                    advance();
                    break;
                }
                if (c == '<')
                    fail("'<' is not allowed in attribute values");
                if (c == '&')
                {
                    reference(attr.value);
                    continue;
                }
                // Attribute-value normalization of literal whitespace.
                attr.value += (c == '\t' || c == '\n' || c == '\r') ? ' ' : c;
                advance();
            }
            if (el.find_attribute(attr.name) != nullptr)
                fail("duplicate attribute '" + attr.name + "'", attr.loc);
            el.attributes.push_back(std::move(attr));
        }
    }

    static void note_text(Element& el, std::string_view chunk, Location loc)
    {
        if (el.text)
            return;
        for (char c : chunk)
        {
            if (!is_space(c))
            {
                el.text = loc;
                return;
            }
        }
    }

    Element element_tree()
    {
        std::vector<Element> stack;
        bool self_closing = false;
        stack.push_back(start_tag(self_closing));
        if (self_closing)
            return std::move(stack.back());

        while (!stack.empty())
        {
            if (at_end())
                fail("unclosed element <" + stack.back().name + ">", stack.back().loc);

            if (looking_at("</"))
            {
                const Location loc = here();
                advance(2);
                const std::string closing = name("element name in end tag");
                skip_space();
                expect(">", "'>' to close end tag");
                if (closing != stack.back().name)
                {
                    fail("end tag </" + closing + "> does not match <" + stack.back().name + ">",
                         loc);
                }
                Element done = std::move(stack.back());
                stack.pop_back();
                if (stack.empty())
                    return done;
                stack.back().children.push_back(std::move(done));
            }
            else if (looking_at("<!--"))
            {
                comment();
            }
            else if (looking_at("<![CDATA["))
            {
                const Location loc = here();
                const auto end = text_.find("]]>", pos_);
                if (end == std::string_view::npos)
                    fail("unterminated CDATA section", loc);
                note_text(stack.back(), text_.substr(pos_ + 9, end - pos_ - 9), loc);
                advance(end + 3 - pos_);
            }
            else if (looking_at("<?"))
            {
                processing_instruction();
            }
            else if (looking_at("<!"))
            {
                fail("unexpected markup declaration");
            }
            else if (peek() == '<')
            {
                if (stack.size() >= max_depth_)
                    fail("element nesting exceeds " + std::to_string(max_depth_) + " levels");
                Element child = start_tag(self_closing);
                if (self_closing)
                    stack.back().children.push_back(std::move(child));
                else
                    stack.push_back(std::move(child));
            }
            else if (peek() == '&')
            {
                const Location loc = here();
                std::string decoded;
                reference(decoded);
                note_text(stack.back(), decoded, loc);
            }
            else
            {
                const Location loc = here();
                const std::size_t begin = pos_;
                while (!at_end() && peek() != '<' && peek() != '&')
                {
                    if (looking_at("]]>"))
                        fail("']]>' is not allowed in character data");
                    advance();
                }
                note_text(stack.back(), text_.substr(begin, pos_ - begin), loc);
            }
        }
        fail("internal parser error");
    }

    std::string_view text_;
    std::size_t max_depth_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int column_ = 1;
};

} // namespace

ParseResult parse(std::string_view text, std::size_t max_depth)
{
    return Parser(text, max_depth).run();
}

} // namespace swarmcmd::xml
