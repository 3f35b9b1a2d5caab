// Built-in word list: a seed vocabulary of common English words expanded
// with simple suffix/prefix morphology and a few compounds, so the corpus
// carries realistic letter statistics without shipping a dictionary.

#include <algorithm>
#include <set>

#include "abpp/textdata.hpp"

namespace abpp {
namespace {

const char* const kNouns[] = {
    "time",  "year",   "people", "way",    "day",    "man",    "woman",  "child",  "world",
    "life",  "hand",   "part",   "eye",    "place",  "work",   "week",   "case",   "point",
    "group", "number", "fact",   "house",  "night",  "water",  "room",   "mother", "father",
    "area",  "money",  "story",  "month",  "book",   "word",   "side",   "kind",   "head",
    "home",  "power",  "hour",   "game",   "line",   "end",    "member", "law",    "car",
    "city",  "name",   "team",   "minute", "idea",   "body",   "back",   "parent", "face",
    "level", "office", "door",   "health", "person", "art",    "war",    "result", "change",
    "moment", "air",   "force",  "street", "image",  "town",   "class",  "board",  "table",
    "chair", "window", "light",  "paper",  "river",  "tree",   "bird",   "road",   "wind",
    "stone", "fire",   "field",  "horse",  "sound",  "music",  "color",  "dog",    "cat",
    "fish",  "food",   "foot",   "garden", "glass",  "gold",   "grass",  "ground", "hall",
    "heart", "hill",   "ice",    "island", "king",   "lady",   "land",   "leaf",   "letter",
    "march", "market", "master", "matter", "metal",  "mile",   "mind",   "morning","mountain",
    "mouth", "nation", "nature", "north",  "note",   "object", "ocean",  "oil",    "order",
    "page",  "pair",   "party",  "path",   "peace",  "picture","plain",  "plan",   "plant",
    "press", "price",  "prince", "queen",  "race",   "rain",   "range",  "reason", "record",
    "rest",  "ring",   "rock",   "rule",   "school", "sea",    "season", "seat",   "sense",
    "ship",  "shop",   "shore",  "sign",   "silver", "sister", "size",   "sky",    "snow",
    "son",   "south",  "space",  "spring", "square", "star",   "state",  "station","step",
    "stick", "store",  "storm",  "summer", "sun",    "surface","thing",  "thought","top",
    "touch", "trade",  "train",  "trip",   "uncle",  "unit",   "valley", "view",   "village",
    "voice", "wall",   "watch",  "wave",   "west",   "wheel",  "while",  "winter", "wood",
    "yard",  "bridge", "castle", "circle", "cloud",  "coast",  "corner", "cotton", "course",
    "crowd", "dance",  "desert", "doctor", "dollar", "dream",  "dress",  "earth",  "east",
    "edge",  "engine", "enemy",  "event",  "farm",   "fear",   "fellow", "figure", "flower",
    "forest","fruit",  "gate",   "giant",  "girl",   "grain",  "guard",  "guest",  "guide",
    "harbor","heat",   "hotel",  "hunt",   "iron",   "joy",    "judge",  "lake",   "lamp",
    "meal",  "meat",   "middle", "milk",   "mill",   "motor",  "nest",   "news",   "noise",
    "nose",  "office", "owner",  "palace", "pencil", "pocket", "pool",   "post",   "pound",
    "prize", "radio",  "rail",   "report", "rice",   "ride",   "roof",   "root",   "rope",
    "salt",  "sand",   "scale",  "scene",  "score",  "screen", "seed",   "shadow", "shape",
    "sheep", "sheet",  "shelf",  "shell",  "silk",   "sleep",  "smile",  "soil",   "soldier",
    "song",  "speed",  "sport",  "stage",  "stream", "string", "sugar",  "tail",   "taste",
    "tent",  "test",   "ticket", "title",  "tower",  "truck",  "value",  "wealth", "weather",
    "wheat", "wife",   "winner", "wire",   "writer",
};

const char* const kVerbs[] = {
    "ask",   "answer", "appear", "begin", "believe", "break",  "bring",  "build",  "burn",
    "buy",   "call",   "care",   "carry", "catch",   "cause",  "check",  "choose", "clean",
    "clear", "climb",  "close",  "come",  "consider","cook",   "count",  "cover",  "create",
    "cross", "cut",    "decide", "deliver","demand", "desire", "destroy","develop","divide",
    "draw",  "drink",  "drive",  "drop",  "earn",    "eat",    "enter",  "escape", "expect",
    "explain","fall",  "feed",   "feel",  "fight",   "fill",   "find",   "finish", "fit",
    "fix",   "fly",    "follow", "forget","form",    "gain",   "gather", "give",   "grow",
    "guess", "handle", "hang",   "happen","hate",    "have",   "hear",   "help",   "hide",
    "hold",  "hope",   "hurry",  "improve","include","invite", "join",   "jump",   "keep",
    "kick",  "kill",   "know",   "laugh", "lay",     "lead",   "learn",  "leave",  "lend",
    "let",   "lie",    "lift",   "listen","live",    "look",   "lose",   "love",   "make",
    "manage","mark",   "mean",   "meet",  "mention", "miss",   "move",   "need",   "obtain",
    "offer", "open",   "pass",   "pay",   "perform", "pick",   "play",   "prepare","present",
    "prevent","produce","promise","prove","provide", "pull",   "push",   "put",    "raise",
    "reach", "read",   "receive","remain","remember","remove", "repeat", "reply",  "return",
    "roll",  "run",    "save",   "say",   "see",     "seem",   "sell",   "send",   "serve",
    "settle","shake",  "share",  "shine", "shoot",   "show",   "shut",   "sing",   "sit",
    "slip",  "speak",  "spend",  "stand", "start",   "stay",   "stop",   "study",  "succeed",
    "suffer","suggest","supply", "suppose","take",   "talk",   "teach",  "tell",   "thank",
    "think", "throw",  "train",  "travel","trust",   "turn",   "visit",  "wait",   "walk",
    "want",  "warn",   "wash",   "wear",  "will",    "win",    "wish",   "wonder", "write",
};

const char* const kAdjectives[] = {
    "able",   "angry",  "bad",    "basic",  "big",    "bitter", "black",  "blind",  "blue",
    "brave",  "bright", "broad",  "brown",  "busy",   "calm",   "cheap",  "clean",  "clever",
    "cold",   "common", "cool",   "dark",   "dear",   "deep",   "direct", "dirty",  "dry",
    "early",  "easy",   "empty",  "equal",  "exact",  "fair",   "famous", "far",    "fast",
    "fine",   "firm",   "flat",   "free",   "fresh",  "full",   "gentle", "glad",   "good",
    "gray",   "great",  "green",  "happy",  "hard",   "heavy",  "high",   "honest", "hot",
    "huge",   "humble", "hungry", "kind",   "large",  "late",   "lazy",   "light",  "little",
    "local",  "long",   "loose",  "loud",   "low",    "lucky",  "mad",    "main",   "modern",
    "narrow", "near",   "neat",   "new",    "nice",   "noble",  "normal", "old",    "only",
    "open",   "pale",   "past",   "plain",  "polite", "poor",   "proper", "proud",  "public",
    "quick",  "quiet",  "rapid",  "rare",   "raw",    "ready",  "real",   "rich",   "right",
    "rough",  "round",  "royal",  "sad",    "safe",   "same",   "secret", "sharp",  "short",
    "shy",    "silent", "simple", "single", "slow",   "small",  "smooth", "soft",   "solid",
    "sorry",  "sour",   "steady", "still",  "strange","strong", "sudden", "sweet",  "tall",
    "thick",  "thin",   "tight",  "tiny",   "tired",  "total",  "true",   "usual",  "warm",
    "weak",   "wet",    "white",  "whole",  "wide",   "wild",   "wise",   "wrong",  "yellow",
    "young",
};

bool ends_with(const std::string& w, const char* suf) {
  const size_t n = std::string(suf).size();
  return w.size() >= n && w.compare(w.size() - n, n, suf) == 0;
}

std::string plural(const std::string& w) {
  if (ends_with(w, "s") || ends_with(w, "x") || ends_with(w, "ch") || ends_with(w, "sh"))
    return w + "es";
  if (ends_with(w, "y") && w.size() > 1 && std::string("aeiou").find(w[w.size() - 2]) ==
                                               std::string::npos)
    return w.substr(0, w.size() - 1) + "ies";
  return w + "s";
}

// Short words ending consonant-vowel-consonant double the final letter
// before a vowel suffix (run -> running, stop -> stopped).
bool doubles_final(const std::string& w) {
  if (w.size() < 3 || w.size() > 4) return false;
  auto vowel = [](char c) { return std::string("aeiou").find(c) != std::string::npos; };
  const char a = w[w.size() - 3], b = w[w.size() - 2], c = w.back();
  return !vowel(a) && vowel(b) && !vowel(c) && std::string("wxy").find(c) == std::string::npos;
}

std::string past(const std::string& w) {
  if (ends_with(w, "e")) return w + "d";
  if (ends_with(w, "y") && w.size() > 1 && std::string("aeiou").find(w[w.size() - 2]) ==
                                               std::string::npos)
    return w.substr(0, w.size() - 1) + "ied";
  if (doubles_final(w)) return w + w.back() + "ed";
  return w + "ed";
}

std::string gerund(const std::string& w) {
  if (ends_with(w, "e") && !ends_with(w, "ee")) return w.substr(0, w.size() - 1) + "ing";
  if (doubles_final(w)) return w + w.back() + "ing";
  return w + "ing";
}

std::string agent(const std::string& w) {
  if (ends_with(w, "e")) return w + "r";
  if (ends_with(w, "y") && w.size() > 1 && std::string("aeiou").find(w[w.size() - 2]) ==
                                               std::string::npos)
    return w.substr(0, w.size() - 1) + "ier";
  if (doubles_final(w)) return w + w.back() + "er";
  return w + "er";
}

std::string superlative(const std::string& w) {
  if (ends_with(w, "e")) return w + "st";
  if (ends_with(w, "y") && w.size() > 1 && std::string("aeiou").find(w[w.size() - 2]) ==
                                               std::string::npos)
    return w.substr(0, w.size() - 1) + "iest";
  if (doubles_final(w)) return w + w.back() + "est";
  return w + "est";
}

}  // namespace

std::vector<std::string> builtin_corpus() {
  std::set<std::string> words;
  auto keep = [&](const std::string& w) {
    if (w.size() >= 3 && w.size() <= 10) words.insert(w);
  };

  for (const char* w : kNouns) {
    keep(w);
    keep(plural(w));
    keep(std::string(w) + "ful");
    keep(std::string(w) + "less");
    keep(std::string(w) + "like");
  }
  for (const char* w : kVerbs) {
    const std::string v(w);
    keep(v);
    keep(plural(v));  // third person
    keep(past(v));
    keep(gerund(v));
    keep(agent(v));
    keep(plural(agent(v)));
    keep("re" + v);
    keep("re" + past(v));
    keep("re" + gerund(v));
    keep("un" + past(v));
    keep("pre" + v);
    keep("mis" + v);
    keep("out" + v);
    keep("over" + v);
  }
  for (const char* w : kAdjectives) {
    const std::string a(w);
    keep(a);
    keep(a + "ly");
    keep("un" + a);
    keep(agent(a));  // comparative
    keep(superlative(a));
    keep(a + "ness");
    keep(a + "ish");
  }
  // Compounds of short seed words, enough to push well past 5k.
  const char* const kShort[] = {"sun", "sea", "sky", "day", "way", "fire", "rain", "snow",
                                "wind", "gold", "iron", "wood", "door", "hand", "foot",
                                "book", "work", "home", "land", "star"};
  const char* const kTails[] = {"light", "side", "line", "man", "ship", "time", "field",
                                "house", "stone", "gate", "yard", "bird", "fall", "storm",
                                "path", "rise", "set", "play", "mark", "wall"};
  for (const char* a : kShort)
    for (const char* b : kTails) keep(std::string(a) + b);

  return {words.begin(), words.end()};
}

}  // namespace abpp
