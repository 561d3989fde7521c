"""Deterministic multi-domain sentiment corpora.

Every domain has its own topic words and its own positive/negative lexicon, so
a classifier fit on one domain transfers imperfectly to the next. All domains
share function words and a small family of verdict words ("good", "bad", ...)
that appear in a fraction of sentences; masked-LM pretraining on the union
picks up their association with each domain's lexicon.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import regex
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.naive_bayes import MultinomialNB

from adaprompt.errors import EmptyInputError, SpecError
from adaprompt.textcore.dataset import LabeledExample

logger = logging.getLogger(__name__)

POSITIVE = "positive"
NEGATIVE = "negative"

SLOT_PATTERN = regex.compile(r"\{(topic|word|adv)\}")

DEFAULT_TEMPLATES = (
    "the {topic} was {adv} {word}",
    "this {topic} is {adv} {word}",
    "i found the {topic} {adv} {word}",
    "what a {word} {topic}",
    "{word} {topic} and {adv} {word} too",
)
DEFAULT_INTENSIFIERS = ("very", "really", "quite", "so", "truly", "pretty")
DEFAULT_VERDICT_CLAUSES = (
    "overall it is {verdict}",
    "i would say it was {verdict}",
    "honestly {verdict}",
)
DEFAULT_VERDICTS = {POSITIVE: ("good", "great", "nice"), NEGATIVE: ("bad", "awful", "poor")}


@dataclass(frozen=True)
class DomainSpec:
    name: str
    positive: tuple[str, ...]
    negative: tuple[str, ...]
    topics: tuple[str, ...]
    templates: tuple[str, ...] = DEFAULT_TEMPLATES

    def validate(self) -> None:
        if not self.name:
            raise SpecError("domain name must be non-empty")
        if not self.positive or not self.negative:
            raise SpecError(f"domain {self.name!r} has an empty sentiment lexicon")
        if not self.topics:
            raise SpecError(f"domain {self.name!r} has no topic words")
        overlap = set(self.positive) & set(self.negative)
        if overlap:
            raise SpecError(f"domain {self.name!r}: lexicons overlap on {sorted(overlap)}")
        if len(self.templates) < 2:
            raise SpecError(f"domain {self.name!r} needs at least two templates")
        for template in self.templates:
            if "{word}" not in template:
                raise SpecError(f"template {template!r} has no {{word}} slot")

    @classmethod
    def from_dict(cls, data: dict) -> "DomainSpec":
        try:
            return cls(
                name=data["name"],
                positive=tuple(data["positive"]),
                negative=tuple(data["negative"]),
                topics=tuple(data["topics"]),
                templates=tuple(data.get("templates", DEFAULT_TEMPLATES)),
            )
        except KeyError as e:
            raise SpecError(f"domain spec is missing {e.args[0]!r}") from None


@dataclass(frozen=True)
class SyntheticSpec:
    """Domains plus the shared vocabulary every domain draws from.

    Attributes:
        domains: Per-domain lexicons and templates.
        n_per_domain: Sentences generated for each domain.
        seed: Seed of the whole corpus.
        verdict_rate: Probability that a sentence ends with a verdict clause.
    """

    domains: tuple[DomainSpec, ...]
    n_per_domain: int = 4000
    seed: int = 0
    verdict_rate: float = 0.5
    intensifiers: tuple[str, ...] = DEFAULT_INTENSIFIERS
    verdict_clauses: tuple[str, ...] = DEFAULT_VERDICT_CLAUSES
    verdicts: dict[str, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_VERDICTS))

    def validate(self) -> None:
        if not self.domains:
            raise SpecError("a synthetic corpus needs at least one domain")
        names = [d.name for d in self.domains]
        if len(set(names)) != len(names):
            raise SpecError(f"duplicate domain names in {names}")
        for domain in self.domains:
            domain.validate()
        if self.n_per_domain < 1:
            raise SpecError(f"n_per_domain must be >= 1, got {self.n_per_domain}")
        if not 0.0 <= self.verdict_rate <= 1.0:
            raise SpecError(f"verdict_rate must be in [0, 1], got {self.verdict_rate}")
        if not self.intensifiers:
            raise SpecError("intensifier list is empty")
        if self.verdict_rate > 0:
            if not self.verdict_clauses:
                raise SpecError("verdict_rate > 0 but no verdict clauses")
            for label in (POSITIVE, NEGATIVE):
                if not self.verdicts.get(label):
                    raise SpecError(f"no verdict words for label {label!r}")

    def domain_names(self) -> list[str]:
        return [d.name for d in self.domains]

    def to_dict(self) -> dict:
        data = asdict(self)
        data["verdicts"] = {k: list(v) for k, v in self.verdicts.items()}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        if "domains" not in data:
            return default_benchmark(**data)
        data = dict(data)
        domains = tuple(DomainSpec.from_dict(d) for d in data.pop("domains"))
        for key in ("intensifiers", "verdict_clauses"):
            if key in data:
                data[key] = tuple(data[key])
        if "verdicts" in data:
            data["verdicts"] = {k: tuple(v) for k, v in data["verdicts"].items()}
        try:
            return cls(domains=domains, **data)
        except TypeError as e:
            raise SpecError(f"invalid synthetic spec: {e}") from None


BENCHMARK_DOMAINS = (
    DomainSpec(
        "shopping",
        positive=("sturdy", "reliable", "genuine", "durable", "sleek",
                  "responsive", "accurate", "solid", "handy", "flawless"),
        negative=("flimsy", "fake", "broken", "defective", "scratched",
                  "cracked", "faulty", "loose", "dented", "useless"),
        topics=("phone", "charger", "case", "cable", "headset",
                "screen", "battery", "package", "seller", "delivery"),
    ),
    DomainSpec(
        "microblog",
        positive=("sunny", "cheerful", "relaxing", "lovely", "joyful",
                  "exciting", "peaceful", "blessed", "fun", "amazing"),
        negative=("gloomy", "exhausting", "boring", "miserable", "stressful",
                  "rainy", "lonely", "annoying", "dreadful", "tiring"),
        topics=("weekend", "morning", "commute", "concert", "holiday",
                "weather", "party", "match", "trip", "day"),
    ),
    DomainSpec(
        "takeout",
        positive=("tasty", "fresh", "crispy", "hot", "generous",
                  "flavorful", "juicy", "prompt", "savory", "fragrant"),
        negative=("cold", "soggy", "stale", "bland", "greasy",
                  "late", "salty", "burnt", "tiny", "spilled"),
        topics=("noodles", "rice", "soup", "dumplings", "burger",
                "pizza", "portion", "courier", "sauce", "order"),
    ),
    DomainSpec(
        "hotel",
        positive=("spacious", "clean", "cozy", "quiet", "friendly",
                  "comfortable", "spotless", "welcoming", "elegant", "convenient"),
        negative=("dirty", "noisy", "cramped", "rude", "smelly",
                  "shabby", "dusty", "moldy", "freezing", "crowded"),
        topics=("room", "bed", "lobby", "staff", "breakfast",
                "bathroom", "pool", "view", "location", "reception"),
    ),
    DomainSpec(
        "movie",
        positive=("gripping", "moving", "brilliant", "witty", "touching",
                  "stunning", "clever", "heartfelt", "captivating", "masterful"),
        negative=("dull", "predictable", "clumsy", "tedious", "shallow",
                  "forgettable", "confusing", "cheesy", "lifeless", "bloated"),
        topics=("film", "plot", "actor", "ending", "script",
                "soundtrack", "director", "scene", "cast", "sequel"),
    ),
)


def default_benchmark(n_per_domain: int = 4000, seed: int = 0, **overrides) -> SyntheticSpec:
    """The five-domain benchmark (20k sentences at the default size)."""
    try:
        return SyntheticSpec(BENCHMARK_DOMAINS, n_per_domain=n_per_domain, seed=seed, **overrides)
    except TypeError as e:
        raise SpecError(f"invalid benchmark override: {e}") from None


def _sentence(
    domain: DomainSpec, label: str, spec: SyntheticSpec, rng: np.random.Generator
) -> str:
    lexicon = domain.positive if label == POSITIVE else domain.negative
    choices = {"topic": domain.topics, "word": lexicon, "adv": spec.intensifiers}
    template = domain.templates[rng.integers(len(domain.templates))]
    text = SLOT_PATTERN.sub(lambda m: str(rng.choice(choices[m.group(1)])), template)
    if spec.verdict_rate and rng.random() < spec.verdict_rate:
        clause = spec.verdict_clauses[rng.integers(len(spec.verdict_clauses))]
        verdict = str(rng.choice(spec.verdicts[label]))
        text = f"{text} , {clause.format(verdict=verdict)}"
    return text


def gen_synthetic_corpus(spec: SyntheticSpec) -> list[LabeledExample]:
    """Generate ``n_per_domain`` label-balanced examples for every domain, in domain order."""
    spec.validate()
    corpus = []
    for index, domain in enumerate(spec.domains):
        rng = np.random.default_rng([spec.seed, index])
        labels = [POSITIVE if i % 2 == 0 else NEGATIVE for i in range(spec.n_per_domain)]
        examples = [
            LabeledExample(_sentence(domain, labels[i], spec, rng), labels[i], domain.name)
            for i in rng.permutation(spec.n_per_domain)
        ]
        corpus.extend(examples)
        logger.debug("Generated %d examples for domain %s", len(examples), domain.name)
    logger.info(
        "Generated synthetic corpus: %d examples, %d domains", len(corpus), len(spec.domains)
    )
    return corpus


def filter_domains(
    examples: Sequence[LabeledExample], domains: Sequence[str]
) -> list[LabeledExample]:
    wanted = set(domains)
    return [e for e in examples if e.domain in wanted]


def bag_of_words_transfer(
    source: Sequence[LabeledExample], target: Sequence[LabeledExample]
) -> float:
    """Accuracy on ``target`` of a unigram-count naive Bayes classifier fit on ``source``."""
    if not source or not target:
        raise EmptyInputError("bag-of-words transfer needs non-empty source and target sets")
    vectorizer = CountVectorizer(token_pattern=r"[^\s]+")
    features = vectorizer.fit_transform([e.text for e in source])
    classifier = MultinomialNB().fit(features, [e.label for e in source])
    predictions = classifier.predict(vectorizer.transform([e.text for e in target]))
    return float(np.mean(predictions == np.array([e.label for e in target])))
