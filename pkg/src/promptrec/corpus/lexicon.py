"""Per-genre tag phrases along three semantic dimensions.

Dimensions: Narrative (plot and conflict), Atmosphere (tone and style),
Appeal (why a viewer reaches for it).  Each genre carries three training
phrases and three evaluation paraphrases.  A dimension's train and eval
phrases share no content words, so scoring on eval tags never rewards
memorized surface wording.

Every genre draws its six phrases from a fixed pool of nine core words:
the genre name, a characteristic word, and seven descriptors.  The six
phrases tile that pool so that every eval content word also occurs in a
train phrase of a *different* dimension — paraphrase transfer is always
learnable from training exposure alone — and so that each eval phrase
carries two words that occur in two train phrases each.  Core words are
additionally chosen so that, at the default feature-hash width, no two
genres' doubly-exposed words share a hash bucket and no core word lands
on another genre's name bucket; residual collisions are confined to
singly-exposed words, where a shared bucket costs the least signal.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigurationError
from .types import Item

DIMENSIONS = ("narrative", "atmosphere", "appeal")

STOPWORDS = frozenset(
    """a an the of in on with and or for to that this where into so at by as is
    are from through under over each every who whose like its it be between
    across until one up out""".split()
)

# Corpora built with num_genres < 16 take a prefix of this tuple.  The
# first eight are ordered so that their anchor words land in distinct
# hash buckets at the default feature width; the full sixteen are chosen
# so no two names share a bucket there either.
GENRE_NAMES = (
    "comedy", "horror", "action", "drama", "scifi", "documentary",
    "thriller", "fantasy", "animation", "crime", "melodrama", "western",
    "musical", "mystery", "war", "sport",
)

# second anchor word per genre (the first anchor is the genre name itself)
CHARACTERISTIC = {
    "comedy": "laughs",
    "horror": "gloom",
    "action": "adrenaline",
    "drama": "tender",
    "melodrama": "candlelight",
    "scifi": "gleaming",
    "documentary": "candor",
    "thriller": "nerves",
    "fantasy": "myth",
    "animation": "cartoon",
    "crime": "rival",
    "western": "saddle",
    "musical": "singalong",
    "mystery": "buried",
    "war": "valor",
    "sport": "grandstand",
}

# genre -> (train phrases, eval phrases), each ordered (narrative, atmosphere, appeal)
_PHRASES: dict[str, tuple[tuple[str, str, str], tuple[str, str, str]]] = {
    "comedy": (
        (
            "a comedy of skits, pratfalls, zingers and punchlines",
            "comedy laughs with zingers, guffaws and wisecracks",
            "laughs and wisecracks, giggles from skits to punchlines",
        ),
        (
            "guffaws, giggles, wisecracks and laughs",
            "skits and pratfalls, giggles to punchlines",
            "a comedy of pratfalls, zingers and guffaws",
        ),
    ),
    "horror": (
        (
            "sinister macabre phantoms, a horror of fright",
            "horror gloom over haunted phantoms and curses",
            "gloom and curses, sinister specters of fright",
        ),
        (
            "haunted gloom, curses and specters",
            "macabre fright, sinister specters",
            "a haunted horror of macabre phantoms",
        ),
    ),
    "action": (
        (
            "an action tempo of chases and daredevil stunts",
            "action adrenaline, daredevil mayhem on a rampage",
            "adrenaline rampage with the thrill of tempo stunts",
        ),
        (
            "adrenaline thrill of mayhem and rampage",
            "tempo chases, the thrill of stunts",
            "daredevil action, chases and mayhem",
        ),
    ),
    "drama": (
        (
            "a reflective drama of sorrow, heartfelt regrets",
            "tender drama, heartfelt heartbreak in silence",
            "tender silence, grief and sorrow over regrets",
        ),
        (
            "tender grief, heartbreak in silence",
            "reflective sorrow, grief and regrets",
            "a reflective drama of heartfelt heartbreak",
        ),
    ),
    "scifi": (
        (
            "spacefaring scifi, cyborgs in the nebula for stargazers",
            "gleaming scifi, cosmic portals for stargazers",
            "gleaming portals in orbit, a spacefaring nebula",
        ),
        (
            "gleaming cosmic portals in orbit",
            "cyborgs in orbit by a spacefaring nebula",
            "a cosmic scifi of cyborgs for stargazers",
        ),
    ),
    "documentary": (
        (
            "a sober documentary of interviews, evidence and verite",
            "unvarnished documentary candor, archival evidence",
            "unvarnished candor, firsthand interviews and verite",
        ),
        (
            "archival candor, firsthand and unvarnished",
            "sober firsthand interviews and verite",
            "a sober documentary of archival evidence",
        ),
    ),
    "thriller": (
        (
            "a coiled thriller of ransom, cornered in a stakeout",
            "thriller nerves, cornered by snares and ambush",
            "coiled nerves, a clockwork ambush over ransom",
        ),
        (
            "clockwork snares, an ambush on the nerves",
            "a coiled stakeout, clockwork ransom",
            "a thriller of snares, cornered stakeout",
        ),
    ),
    "fantasy": (
        (
            "a lush fantasy quest of runes and griffins",
            "spellbound fantasy myth, lush with oracles",
            "fabled myth and oracles, a quest of runes",
        ),
        (
            "fabled spellbound myth of oracles",
            "a fabled quest of runes and griffins",
            "spellbound fantasy, lush with griffins",
        ),
    ),
    "animation": (
        (
            "an animation of playful bounce, animated flipbook",
            "bright cartoon animation, a playful storyboard",
            "animated cartoon frames, storyboard bounce",
        ),
        (
            "bright cartoon frames from a storyboard",
            "animated flipbook frames with bounce",
            "a bright playful animation flipbook",
        ),
    ),
    "crime": (
        (
            "a crime of underworld rackets, mobsters on a heist",
            "rival crime saga, a heist under the dragnet",
            "rival rackets, a dragnet through underworld alleys",
        ),
        (
            "a rival saga, dragnet in the alleys",
            "underworld mobsters, rackets in the alleys",
            "a crime saga of mobsters on a heist",
        ),
    ),
    "melodrama": (
        (
            "a swooning melodrama of embraces, keepsakes of courtship",
            "melodrama by candlelight, patient yearning over keepsakes",
            "candlelight courtship, yearning embraces and trysts",
        ),
        (
            "patient yearning and trysts by candlelight",
            "swooning embraces, trysts of courtship",
            "a swooning melodrama of patient keepsakes",
        ),
    ),
    "western": (
        (
            "a dustbowl western of spurs, sagebrush and deputies",
            "dusty western trail, a saddle through sagebrush",
            "dusty saddle and spurs, deputies in the haze",
        ),
        (
            "a dusty trail, saddle in the haze",
            "dustbowl spurs, deputies in the haze",
            "a dustbowl western trail of sagebrush",
        ),
    ),
    "musical": (
        (
            "a musical of chorus, serenade duets and an encore",
            "buoyant musical singalong, duets in the footlights",
            "a buoyant singalong of ballads, chorus to encore",
        ),
        (
            "buoyant singalong ballads in the footlights",
            "a chorus serenade, ballads to encore",
            "a musical serenade of duets in footlights",
        ),
    ),
    "mystery": (
        (
            "a cryptic mystery of fingerprints, a riddle in ciphers",
            "a mystery of buried clues, magnifying the ciphers",
            "magnifying a cryptic hush over buried fingerprints",
        ),
        (
            "buried clues in a magnifying hush",
            "a cryptic riddle, fingerprints in the hush",
            "a mystery riddle of ciphers and clues",
        ),
    ),
    "war": (
        (
            "a war chronicle of medals, marches to the trenches",
            "war valor, marches of regiments and convoys",
            "valor in the trenches, a chronicle of regiments and barracks",
        ),
        (
            "valor of regiments, convoys to the barracks",
            "a chronicle of medals, barracks to trenches",
            "a war of marches, medals and convoys",
        ),
    ),
    "sport": (
        (
            "an underdog sport, referees and a buzzer into overtime",
            "grandstand sport, referees, sweat in the locker",
            "grandstand to locker, underdog champions in overtime",
        ),
        (
            "champions in the grandstand, sweat in the locker",
            "underdog champions at the buzzer, overtime",
            "a sport of sweat, buzzer and referees",
        ),
    ),
}


def content_words(phrase: str) -> set[str]:
    """Lowercased alphanumeric tokens minus stopwords."""
    import re

    tokens = re.findall(r"[a-z0-9]+", phrase.lower())
    return {t for t in tokens if t not in STOPWORDS}


@dataclass
class TagLexicon:
    """Maps genre names to (train, eval) phrase triples."""

    entries: dict[str, tuple[tuple[str, str, str], tuple[str, str, str]]]

    def __post_init__(self):
        self.reverse: dict[str, str] = {}
        for genre, (train, ev) in self.entries.items():
            if len(train) != 3 or len(ev) != 3:
                raise ConfigurationError(f"genre {genre!r} needs 3 train + 3 eval phrases")
            for dim in range(3):
                shared = content_words(train[dim]) & content_words(ev[dim])
                if shared:
                    raise ConfigurationError(
                        f"genre {genre!r} dimension {DIMENSIONS[dim]!r}: train and "
                        f"eval tags share content words {sorted(shared)}"
                    )
            for phrase in (*train, *ev):
                if phrase in self.reverse:
                    raise ConfigurationError(f"duplicate tag phrase {phrase!r}")
                self.reverse[phrase] = genre

    def genres(self) -> list[str]:
        return list(self.entries)

    def train_tags(self, genre: str) -> tuple[str, str, str]:
        self._check(genre)
        return self.entries[genre][0]

    def eval_tags(self, genre: str) -> tuple[str, str, str]:
        self._check(genre)
        return self.entries[genre][1]

    def tag(self, genre: str, phase: str, dim: int) -> str:
        self._check(genre)
        pair = self.entries[genre]
        return (pair[0] if phase == "train" else pair[1])[dim]

    def source_genre(self, phrase: str) -> str:
        if phrase not in self.reverse:
            raise ConfigurationError(f"phrase {phrase!r} is not in the lexicon")
        return self.reverse[phrase]

    def _check(self, genre: str) -> None:
        if genre not in self.entries:
            raise ConfigurationError(f"genre {genre!r} missing from the tag lexicon")


DEFAULT_LEXICON = TagLexicon(dict(_PHRASES))


def augment_tags(item: Item, genre_names: list[str], lexicon: TagLexicon = DEFAULT_LEXICON) -> Item:
    """Fill missing tags from the lexicon of the item's first genre.

    The assignment is a pure function of the item (its primary genre), so
    re-running augmentation is idempotent and deterministic.
    """
    if item.train_tags is not None and item.eval_tags is not None:
        return item
    primary = genre_names[item.genres[0]]
    lexicon._check(primary)
    train, ev = lexicon.entries[primary]
    return Item(
        item_id=item.item_id,
        title=item.title,
        genres=item.genres,
        train_tags=item.train_tags or train,
        eval_tags=item.eval_tags or ev,
    )
