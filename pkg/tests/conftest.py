import pytest

from mlas2.dataset import AnswerCandidate, Dataset, Question, QuestionGroup


def make_question(qid: str, text: str, lang: str = "en") -> Question:
    return Question(id=qid, origin_id=qid, text=text, language=lang, provenance=(lang,))


def make_candidate(
    cid: str, qid: str, text: str, label: int | None, lang: str = "en"
) -> AnswerCandidate:
    return AnswerCandidate(
        id=cid,
        question_id=qid,
        origin_id=cid,
        text=text,
        label=label,
        language=lang,
        provenance=(lang,),
    )


def make_group(qid: str, q_text: str, labeled_texts, lang: str = "en") -> QuestionGroup:
    cands = tuple(
        make_candidate(f"{qid}c{i}", qid, text, label, lang)
        for i, (text, label) in enumerate(labeled_texts)
    )
    return QuestionGroup(make_question(qid, q_text, lang), cands)


def make_dataset(groups, name: str = "En", split: str = "train") -> Dataset:
    return Dataset(name, split, tuple(groups))


@pytest.fixture
def tiny_dataset() -> Dataset:
    """Two questions with candidate labels [1, 0] and [1, 1, 0]."""
    return make_dataset(
        [
            make_group("q1", "what color is the sky", [("the sky is blue", 1), ("grass is green", 0)]),
            make_group(
                "q2",
                "how many legs has a spider",
                [
                    ("a spider has eight legs", 1),
                    ("spiders are eight legged", 1),
                    ("a dog has four legs", 0),
                ],
            ),
        ]
    )


def make_synthetic_dataset(
    num_questions: int = 50, cands_per_question: int = 4, lang: str = "en"
) -> Dataset:
    """Deterministic fixture: every question gets one positive candidate."""
    groups = []
    for i in range(num_questions):
        labeled = [(f"answer {i} variant {j} token{j}", 1 if j == 0 else 0) for j in range(cands_per_question)]
        groups.append(make_group(f"q{i:03d}", f"question number {i} about topic{i}", labeled, lang))
    return make_dataset(groups, name="En", split="train")
