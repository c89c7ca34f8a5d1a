"""Shared builders for test pages, breakage cases and scripted backends."""

from __future__ import annotations

import json
import random
from pathlib import Path

from uirepair import (
    BreakageCase,
    PageSnapshot,
    WebElementRecord,
    save_snapshot,
)

DATA_DIR = Path(__file__).parent / "data"


def make_record(
    numeric_id: int,
    xpath: str,
    tag: str,
    *,
    id: str = "",
    name: str = "",
    class_name: str = "",
    text: str = "",
    link_text: str = "",
    x: int = 0,
    y: int = 0,
    width: int = 0,
    height: int = 0,
    is_leaf: bool = True,
) -> WebElementRecord:
    return WebElementRecord(
        numeric_id=numeric_id, id=id, name=name, class_name=class_name,
        xpath=xpath, text=text, tag_name=tag, link_text=link_text,
        x=x, y=y, width=width, height=height, is_leaf=is_leaf,
    )


class PageBuilder:
    """Appends records in document order, assigning dense numeric ids."""

    def __init__(self) -> None:
        self.records: list[WebElementRecord] = []

    def add(self, xpath: str, tag: str, **kwargs) -> WebElementRecord:
        record = make_record(len(self.records), xpath, tag, **kwargs)
        self.records.append(record)
        return record

    def build(self, label: str) -> PageSnapshot:
        return PageSnapshot(label=label, records=tuple(self.records))


# --- category-form fixture (name locator broken by a rename) ------------------------

CATEGORY_STATEMENT = 'driver.findElement(By.name("category")).sendKeys("Category1");'
CATEGORY_TARGET_XPATH = (
    "/html[1]/body[1]/div[4]/form[1]/table[1]/tbody[1]/tr[2]/td[2]/input[1]"
)
CATEGORY_GT_XPATH = (
    "/html[1]/body[1]/div[3]/form[1]/table[1]/tbody[1]/tr[2]/td[2]/input[1]"
)
CATEGORY_MATCH_RESPONSE = (
    "The most similar element's numericId: 70. "
    "Because they share the most similar attributes: xpath, text."
)
CATEGORY_REPAIR_RESPONSE = (
    "```java\n"
    f'driver.findElement(By.xpath("{CATEGORY_GT_XPATH}")).sendKeys("Category1");\n'
    "```"
)


def category_old_page() -> PageSnapshot:
    b = PageBuilder()
    b.add("/html[1]", "html", is_leaf=False)
    b.add("/html[1]/body[1]", "body", is_leaf=False)
    b.add("/html[1]/body[1]/div[1]", "div", is_leaf=False)
    b.add("/html[1]/body[1]/div[1]/a[1]", "a", text="Main", link_text="Main")
    b.add("/html[1]/body[1]/div[2]", "div", is_leaf=False)
    b.add("/html[1]/body[1]/div[2]/a[1]", "a", text="Manage", link_text="Manage")
    b.add("/html[1]/body[1]/div[3]", "div", is_leaf=False)
    b.add("/html[1]/body[1]/div[3]/p[1]", "p", text="Edit project")
    base = "/html[1]/body[1]/div[4]"
    b.add(base, "div", is_leaf=False)
    b.add(f"{base}/form[1]", "form", is_leaf=False)
    b.add(f"{base}/form[1]/table[1]", "table", is_leaf=False)
    b.add(f"{base}/form[1]/table[1]/tbody[1]", "tbody", is_leaf=False)
    b.add(f"{base}/form[1]/table[1]/tbody[1]/tr[1]", "tr", text="Categories", is_leaf=False)
    b.add(f"{base}/form[1]/table[1]/tbody[1]/tr[1]/td[1]", "td", text="Categories")
    b.add(f"{base}/form[1]/table[1]/tbody[1]/tr[1]/td[2]", "td")
    b.add(f"{base}/form[1]/table[1]/tbody[1]/tr[2]", "tr", text="Category1", is_leaf=False)
    b.add(f"{base}/form[1]/table[1]/tbody[1]/tr[2]/td[1]", "td")
    b.add(f"{base}/form[1]/table[1]/tbody[1]/tr[2]/td[2]", "td", text="Category1", is_leaf=False)
    target = b.add(
        CATEGORY_TARGET_XPATH, "input",
        name="category", text="Category1", x=363, y=278, width=261, height=21,
    )
    b.add(f"{base}/form[1]/input[2]", "input", class_name="button", text="Add Category")
    assert target.xpath == CATEGORY_TARGET_XPATH
    return b.build("category-old")


def category_new_page() -> PageSnapshot:
    """Page after the rework: the category input moved and was renamed.

    The ground-truth input sits at numericId 70 and a lookalike button at
    numericId 20, so scripted answers can cite stable ids.
    """
    b = PageBuilder()
    b.add("/html[1]", "html", is_leaf=False)
    b.add("/html[1]/body[1]", "body", is_leaf=False)
    b.add("/html[1]/body[1]/div[1]", "div", is_leaf=False)
    for i in range(1, 11):
        b.add(f"/html[1]/body[1]/div[1]/a[{i}]", "a",
              text=f"Menu {i}", link_text=f"Menu {i}")
    bar = "/html[1]/body[1]/table[1]"
    b.add(bar, "table", is_leaf=False)
    b.add(f"{bar}/tbody[1]", "tbody", is_leaf=False)
    b.add(f"{bar}/tbody[1]/tr[1]", "tr", is_leaf=False)
    b.add(f"{bar}/tbody[1]/tr[1]/td[1]", "td", text="Logged in as admin")
    b.add(f"{bar}/tbody[1]/tr[1]/td[2]", "td", text="2026-08-25")
    b.add(f"{bar}/tbody[1]/tr[1]/td[3]", "td", is_leaf=False)
    b.add(f"{bar}/tbody[1]/tr[1]/td[3]/form[1]", "form", is_leaf=False)
    switch = b.add(
        f"{bar}/tbody[1]/tr[1]/td[3]/form[1]/input[1]", "input",
        class_name="button-small", text="Switch", x=951, y=121, width=51, height=20,
    )
    b.add("/html[1]/body[1]/div[2]", "div", is_leaf=False)
    b.add("/html[1]/body[1]/div[2]/a[1]", "a", text="Manage", link_text="Manage")
    b.add("/html[1]/body[1]/div[2]/a[2]", "a",
          text="Manage Projects", link_text="Manage Projects")
    note = 1
    while len(b.records) < 60:
        b.add(f"/html[1]/body[1]/div[2]/p[{note}]", "p", text=f"Project note {note}")
        note += 1
    base = "/html[1]/body[1]/div[3]"
    b.add(base, "div", is_leaf=False)
    b.add(f"{base}/form[1]", "form", is_leaf=False)
    b.add(f"{base}/form[1]/table[1]", "table", is_leaf=False)
    b.add(f"{base}/form[1]/table[1]/tbody[1]", "tbody", is_leaf=False)
    b.add(f"{base}/form[1]/table[1]/tbody[1]/tr[1]", "tr", text="Categories", is_leaf=False)
    b.add(f"{base}/form[1]/table[1]/tbody[1]/tr[1]/td[1]", "td", text="Categories")
    b.add(f"{base}/form[1]/table[1]/tbody[1]/tr[1]/td[2]", "td")
    b.add(f"{base}/form[1]/table[1]/tbody[1]/tr[2]", "tr", text="Category1", is_leaf=False)
    b.add(f"{base}/form[1]/table[1]/tbody[1]/tr[2]/td[1]", "td")
    b.add(f"{base}/form[1]/table[1]/tbody[1]/tr[2]/td[2]", "td",
          text="Category1", is_leaf=False)
    gt = b.add(
        CATEGORY_GT_XPATH, "input",
        name="new_category", text="Category1", x=403, y=295, width=261, height=21,
    )
    b.add(f"{base}/form[1]/input[2]", "input", class_name="button",
          text="Add Category", x=403, y=321, width=120, height=24)
    b.add("/html[1]/body[1]/div[5]", "div", is_leaf=False)
    for i in range(1, 8):
        b.add(f"/html[1]/body[1]/div[5]/p[{i}]", "p", text="Footer")
    assert switch.numeric_id == 20
    assert gt.numeric_id == 70
    assert len(b.records) == 80
    return b.build("category-new")


def category_mock_script() -> dict:
    return {
        "by_kind": {
            "matching": CATEGORY_MATCH_RESPONSE,
            "repair": CATEGORY_REPAIR_RESPONSE,
        }
    }


def category_case(**overrides) -> BreakageCase:
    fields = dict(
        breakage_id="category-1",
        application="tracker",
        old_page=category_old_page(),
        new_page=category_new_page(),
        broken_statement=CATEGORY_STATEMENT,
        target_xpath=CATEGORY_TARGET_XPATH,
        gt_xpath=CATEGORY_GT_XPATH,
    )
    fields.update(overrides)
    return BreakageCase(**fields)


# --- tab-link fixture (self-correction path) -----------------------------------------

TAB_STATEMENT = (
    'driver.findElement(By.xpath("//*[@id=\\"content wrapper\\"]'
    '/div[1]/ul/li[3]/a")).click();'
)
TAB_TARGET_XPATH = "/html[1]/body[1]/div[1]/div[2]/div[1]/ul[1]/li[3]/a[1]"
TAB_WRONG_XPATH = "/html[1]/body[1]/div[1]/div[2]/div[1]/ul[1]/li[1]/a[1]"
TAB_GT_XPATH = "/html[1]/body[1]/div[1]/div[2]/div[2]/div[1]/div[4]/div[1]/h2[1]/a[1]"
TAB_FIRST_RESPONSE = (
    "The most similar element's numericId: 8. "
    "Because they share the most similar attributes: xpath, text, tagName, linkText."
)
TAB_CORRECTED_RESPONSE = (
    "The most similar element's numericId: 11. "
    "Because they share the most similar attributes: xpath, text, tagName, linkText."
)
TAB_FIRST_REPAIR = (
    "```java\n"
    f'driver.findElement(By.xpath("{TAB_WRONG_XPATH}")).click();\n'
    "```"
)
TAB_SECOND_REPAIR = (
    "```java\n"
    f'driver.findElement(By.xpath("{TAB_GT_XPATH}")).click();\n'
    "```"
)


def tab_old_page() -> PageSnapshot:
    b = PageBuilder()
    b.add("/html[1]", "html", is_leaf=False)
    b.add("/html[1]/body[1]", "body", is_leaf=False)
    b.add("/html[1]/body[1]/div[1]", "div", is_leaf=False)
    b.add("/html[1]/body[1]/div[1]/div[1]", "div", text="Collabtive", is_leaf=False)
    b.add("/html[1]/body[1]/div[1]/div[2]", "div", is_leaf=False)
    tabs = "/html[1]/body[1]/div[1]/div[2]/div[1]"
    b.add(tabs, "div", is_leaf=False)
    b.add(f"{tabs}/ul[1]", "ul", is_leaf=False)
    b.add(f"{tabs}/ul[1]/li[1]", "li", text="Desktop", is_leaf=False)
    b.add(f"{tabs}/ul[1]/li[1]/a[1]", "a", text="Desktop", link_text="Desktop")
    b.add(f"{tabs}/ul[1]/li[2]", "li", text="Files", is_leaf=False)
    b.add(f"{tabs}/ul[1]/li[2]/a[1]", "a", text="Files", link_text="Files")
    b.add(f"{tabs}/ul[1]/li[3]", "li", text="Timetracker", is_leaf=False)
    target = b.add(TAB_TARGET_XPATH, "a", text="Timetracker", link_text="Timetracker")
    assert target.numeric_id == 12
    return b.build("tab-old")


def tab_new_page() -> PageSnapshot:
    """The tab row lost its third entry; the link resurfaced as a widget
    heading deeper in the content column."""
    b = PageBuilder()
    b.add("/html[1]", "html",
          text="Collabtive Desktop Files Timetracker", is_leaf=False)
    b.add("/html[1]/body[1]", "body",
          text="Collabtive Desktop Files Timetracker", is_leaf=False)
    b.add("/html[1]/body[1]/div[1]", "div",
          text="Collabtive Desktop Files Timetracker", is_leaf=False)
    b.add("/html[1]/body[1]/div[1]/div[1]", "div", text="Collabtive", is_leaf=False)
    b.add("/html[1]/body[1]/div[1]/div[2]", "div",
          text="Desktop Files Timetracker", is_leaf=False)
    tabs = "/html[1]/body[1]/div[1]/div[2]/div[1]"
    b.add(tabs, "div", text="Desktop Files", is_leaf=False)
    b.add(f"{tabs}/ul[1]", "ul", text="Desktop Files", is_leaf=False)
    b.add(f"{tabs}/ul[1]/li[1]", "li", text="Desktop", is_leaf=False)
    wrong = b.add(f"{tabs}/ul[1]/li[1]/a[1]", "a", text="Desktop", link_text="Desktop")
    b.add(f"{tabs}/ul[1]/li[2]", "li", text="Files", is_leaf=False)
    b.add(f"{tabs}/ul[1]/li[2]/a[1]", "a", text="Files", link_text="Files")
    gt = b.add(TAB_GT_XPATH, "a", text="Timetracker", link_text="Timetracker")
    assert wrong.numeric_id == 8 and wrong.xpath == TAB_WRONG_XPATH
    assert gt.numeric_id == 11
    return b.build("tab-new")


def tab_mock_script(breakage_id: str = "tab-1") -> dict:
    sequence = (
        [TAB_FIRST_RESPONSE] * 4
        + [TAB_FIRST_REPAIR]
        + [TAB_CORRECTED_RESPONSE] * 4
        + [TAB_SECOND_REPAIR]
    )
    return {"by_breakage": {breakage_id: {"sequence": sequence}}}


def tab_case(**overrides) -> BreakageCase:
    fields = dict(
        breakage_id="tab-1",
        application="groupware",
        old_page=tab_old_page(),
        new_page=tab_new_page(),
        broken_statement=TAB_STATEMENT,
        target_xpath=TAB_TARGET_XPATH,
        gt_xpath=TAB_GT_XPATH,
    )
    fields.update(overrides)
    return BreakageCase(**fields)


# --- synthetic batch corpus -----------------------------------------------------------

CORPUS_APPLICATIONS = (
    "tracker", "courseware", "groupware", "booking", "passwords", "budget", "wiki",
)


def write_batch_corpus(root: Path, count: int = 62) -> dict[str, Path]:
    """Write snapshots, a manifest, a mock script and ground truth under root."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    save_snapshot(category_old_page(), root / "old.snapshot")
    save_snapshot(category_new_page(), root / "new.snapshot")
    breakages = []
    gt_lines = []
    for i in range(count):
        breakage_id = f"b{i:02d}"
        application = CORPUS_APPLICATIONS[i % len(CORPUS_APPLICATIONS)]
        breakages.append({
            "id": breakage_id,
            "application": application,
            "old_snapshot": "old.snapshot",
            "new_snapshot": "new.snapshot",
            "statement": CATEGORY_STATEMENT,
            "target_xpath": CATEGORY_TARGET_XPATH,
            "matcher": "edit-distance",
            "gt_xpath": CATEGORY_GT_XPATH,
        })
        gt_lines.append("\t".join(
            (breakage_id, application, CATEGORY_TARGET_XPATH, CATEGORY_GT_XPATH)
        ))
    manifest = root / "manifest.json"
    manifest.write_text(
        json.dumps({"breakages": breakages}, indent=2), encoding="utf-8"
    )
    script = root / "mock_script.json"
    script.write_text(json.dumps(category_mock_script()), encoding="utf-8")
    ground_truth = root / "ground_truth.tsv"
    ground_truth.write_text("\n".join(gt_lines) + "\n", encoding="utf-8")
    return {
        "manifest": manifest,
        "script": script,
        "ground_truth": ground_truth,
        "old": root / "old.snapshot",
        "new": root / "new.snapshot",
    }


# --- random statement corpus ------------------------------------------------------------

_LOCATOR_ALPHABET = 'abcdefghijklmnopqrstuvwxyz0123456789 _-/[]@=*."\\'
_TEXT_ALPHABET = "abcdefghijklmnopqrstuvwxyz ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789'&"
_TAGS = ("div", "span", "a", "input", "td", "li", "h2", "form")


def encode_java_literal(value: str) -> str:
    return value.replace("\\", "\\\\").replace('"', '\\"')


def _rand_text(rng: random.Random, alphabet: str, low: int, high: int) -> str:
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(low, high)))


def random_xpath(rng: random.Random) -> str:
    depth = rng.randint(1, 6)
    steps = "".join(
        f"/{rng.choice(_TAGS)}[{rng.randint(1, 9)}]" for _ in range(depth)
    )
    return "/html[1]" + steps


def random_element(rng: random.Random, numeric_id: int = 0) -> WebElementRecord:
    return make_record(
        numeric_id,
        random_xpath(rng),
        rng.choice(_TAGS),
        id=_rand_text(rng, _TEXT_ALPHABET, 0, 8),
        name=_rand_text(rng, _TEXT_ALPHABET, 0, 8),
        text=_rand_text(rng, _TEXT_ALPHABET, 0, 20),
        x=rng.randint(0, 1200),
        y=rng.randint(0, 900),
        width=rng.randint(0, 400),
        height=rng.randint(0, 80),
        is_leaf=rng.random() < 0.8,
    )


def random_statement(rng: random.Random) -> str:
    """One statement of the supported grammar, locator included."""
    strategy = rng.choice(
        ["xpath", "id", "name", "className", "linkText", "cssSelector"]
    )
    value = _rand_text(rng, _LOCATOR_ALPHABET, 1, 30)
    find = f'driver.findElement(By.{strategy}("{encode_java_literal(value)}"))'
    prefix = rng.choice(["", "Assert."])
    form = rng.randrange(6)
    if form == 0:
        return f"{find}.{rng.choice(['click', 'clear', 'submit'])}();"
    if form == 1:
        keys = encode_java_literal(_rand_text(rng, _TEXT_ALPHABET, 0, 15))
        return f'{find}.sendKeys("{keys}");'
    if form == 2:
        return f"{find};"
    if form == 3:
        expected = encode_java_literal(_rand_text(rng, _TEXT_ALPHABET, 0, 15))
        if rng.random() < 0.5:
            return f'{prefix}assertEquals({find}.getText(), "{expected}");'
        return f'{prefix}assertEquals("{expected}", {find}.getText());'
    if form == 4:
        expected = encode_java_literal(_rand_text(rng, _TEXT_ALPHABET, 0, 15))
        kind = rng.choice(["assertTrue", "assertFalse"])
        return f'{prefix}{kind}({find}.getText().equals("{expected}"));'
    return f"{find}.getText();"
