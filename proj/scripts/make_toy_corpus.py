"""Writes data/toy.txt: traditional cumulative and counting rhymes (~10 KB)."""

import pathlib

JACK = [
    ("house", "that Jack built"),
    ("malt", "that lay in"),
    ("rat", "that ate"),
    ("cat", "that killed"),
    ("dog", "that worried"),
    ("cow with the crumpled horn", "that tossed"),
    ("maiden all forlorn", "that milked"),
    ("man all tattered and torn", "that kissed"),
    ("priest all shaven and shorn", "that married"),
    ("cock that crowed in the morn", "that waked"),
    ("farmer sowing his corn", "that kept"),
]

DAYS = ["first", "second", "third", "fourth", "fifth", "sixth",
        "seventh", "eighth", "ninth", "tenth", "eleventh", "twelfth"]
GIFTS = [
    "a partridge in a pear tree",
    "two turtle doves",
    "three French hens",
    "four calling birds",
    "five gold rings",
    "six geese a-laying",
    "seven swans a-swimming",
    "eight maids a-milking",
    "nine ladies dancing",
    "ten lords a-leaping",
    "eleven pipers piping",
    "twelve drummers drumming",
]

FLY = [
    ("fly", ""),
    ("spider", "That wriggled and jiggled and tickled inside her."),
    ("bird", "How absurd to swallow a bird!"),
    ("cat", "Fancy that, to swallow a cat!"),
    ("dog", "What a hog, to swallow a dog!"),
    ("goat", "She just opened her throat and swallowed a goat!"),
    ("cow", "I don't know how she swallowed a cow!"),
]

FARM = [("cow", "moo"), ("pig", "oink"), ("duck", "quack"), ("sheep", "baa"), ("horse", "neigh")]

NUMBERS = ["ten", "nine", "eight", "seven", "six", "five", "four", "three", "two", "one", "no"]


def jack():
    verses = []
    for i in range(len(JACK)):
        lines = [f"This is the {JACK[i][0]}"]
        for j in range(i, 0, -1):
            lines.append(f"{JACK[j][1]} the {JACK[j - 1][0]}")
        lines.append("that Jack built." if i else "")
        if i == 0:
            lines = ["This is the house that Jack built."]
        verses.append("\n".join(lines))
    return "\n\n".join(verses)


def days():
    verses = []
    for d in range(12):
        lines = [f"On the {DAYS[d]} day of Christmas my true love gave to me"]
        for g in range(d, -1, -1):
            gift = GIFTS[g]
            if g == 0 and d > 0:
                gift = "and " + gift
            lines.append(gift + ("." if g == 0 else ","))
        verses.append("\n".join(lines))
    return "\n\n".join(verses)


def fly():
    verses = []
    for i, (animal, remark) in enumerate(FLY):
        lines = [f"There was an old lady who swallowed a {animal}."]
        if remark:
            lines.append(remark)
        for j in range(i, 0, -1):
            lines.append(f"She swallowed the {FLY[j][0]} to catch the {FLY[j - 1][0]}.")
        lines.append("I don't know why she swallowed a fly. Perhaps she'll die.")
        verses.append("\n".join(lines))
    verses.append("There was an old lady who swallowed a horse.\nShe's dead, of course!")
    return "\n\n".join(verses)


def farm():
    verses = []
    for animal, sound in FARM:
        verses.append(
            "Old MacDonald had a farm, E-I-E-I-O.\n"
            f"And on that farm he had a {animal}, E-I-E-I-O.\n"
            f"With a {sound} {sound} here and a {sound} {sound} there,\n"
            f"Here a {sound}, there a {sound}, everywhere a {sound} {sound}.\n"
            "Old MacDonald had a farm, E-I-E-I-O."
        )
    return "\n\n".join(verses)


def bottles():
    verses = []
    for i in range(10):
        n, m = NUMBERS[i], NUMBERS[i + 1]
        s = "s" if n != "one" else ""
        t = "s" if m != "one" else ""
        verses.append(
            f"{n.capitalize()} green bottle{s} hanging on the wall,\n"
            f"{n.capitalize()} green bottle{s} hanging on the wall,\n"
            "And if one green bottle should accidentally fall,\n"
            f"There'll be {m} green bottle{t} hanging on the wall."
        )
    return "\n\n".join(verses)


def bed():
    verses = []
    for i in range(9):
        n = NUMBERS[i]
        verses.append(
            f"There were {n} in the bed and the little one said,\n"
            "Roll over! Roll over!\n"
            "So they all rolled over and one fell out."
        )
    verses.append("There was one in the bed and the little one said,\nGood night!")
    return "\n\n".join(verses)


def main():
    text = "\n\n\n".join([jack(), days(), fly(), farm(), bottles(), bed()]) + "\n"
    out = pathlib.Path(__file__).resolve().parent.parent / "data" / "toy.txt"
    out.write_text(text, encoding="utf-8")
    print(f"{out}: {len(text.encode())} bytes")


if __name__ == "__main__":
    main()
