#pragma once

// Well-formedness check backed by expat, plus a flat list of the elements seen.

#include <expat.h>

#include <map>
#include <string>
#include <vector>

namespace testutil {

struct XmlElement {
    std::string name;
    std::map<std::string, std::string> attrs;
};

struct XmlResult {
    bool ok = false;
    std::string error;
    std::vector<XmlElement> elements;

    std::vector<const XmlElement*> named(const std::string& n) const {
        std::vector<const XmlElement*> out;
        for (const auto& e : elements)
            if (e.name == n) out.push_back(&e);
        return out;
    }
};

inline XmlResult parse_xml(const std::string& text) {
    XmlResult result;
    XML_Parser parser = XML_ParserCreate(nullptr);
    XML_SetUserData(parser, &result);
    XML_SetStartElementHandler(parser, [](void* data, const XML_Char* name, const XML_Char** attrs) {
        XmlElement e{name, {}};
        for (int i = 0; attrs[i]; i += 2) e.attrs[attrs[i]] = attrs[i + 1];
        static_cast<XmlResult*>(data)->elements.push_back(std::move(e));
    });
    if (XML_Parse(parser, text.data(), static_cast<int>(text.size()), XML_TRUE) == XML_STATUS_OK) {
        result.ok = true;
    } else {
        result.error = std::string(XML_ErrorString(XML_GetErrorCode(parser))) + " at line " +
                       std::to_string(XML_GetCurrentLineNumber(parser));
    }
    XML_ParserFree(parser);
    return result;
}

} // namespace testutil
