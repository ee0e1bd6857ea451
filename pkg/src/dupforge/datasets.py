"""Small deterministic clean datasets for demos, tests and benchmarks."""

from __future__ import annotations

import io
from decimal import Decimal

from .rng import Stream, derive_key
from .values import csv_cell, csv_line, encode_value

FIRST = ("James Mary John Patricia Robert Jennifer Michael Linda William Elizabeth David Barbara Richard Susan "
         "Joseph Jessica Thomas Sarah Charles Karen Christopher Nancy Daniel Lisa Matthew Betty Anthony Margaret "
         "Mark Sandra Donald Ashley Steven Kimberly Paul Emily Andrew Donna Joshua Michelle Kenneth Dorothy Kevin "
         "Carol Brian Amanda George Melissa Edward Deborah Ronald Stephanie Timothy Rebecca Jason Sharon Jeffrey "
         "Laura Ryan Cynthia Jacob Kathleen Gary Amy Nicholas Shirley Eric Angela Jonathan Helen Stephen Anna "
         "Larry Brenda Justin Pamela Scott Nicole Brandon Emma Benjamin Samantha Samuel Katherine Gregory "
         "Christine Frank Debra Alexander Rachel Raymond Catherine Patrick Carolyn Jack Janet Dennis Ruth Jerry "
         "Maria Tyler Heather Aaron Diane Jose Virginia Adam Julie Henry Joyce Nathan Victoria Douglas Olivia "
         "Zachary Kelly Peter Christina Kyle Lauren Walter Joan Ethan Evelyn Jeremy Judith Harold Megan Keith "
         "Cheryl Christian Andrea Roger Hannah Noah Martha Gerald Jacqueline Carl Frances Terry Gloria Sean Ann "
         "Austin Teresa Arthur Kathryn Lawrence Sara Jesse Janice Dylan Jean Bryan Alice Joe Madison Jordan "
         "Doris Billy Abigail Bruce Julia Albert Judy Willie Grace Gabriel Denise Logan Amber Alan Marilyn Juan "
         "Beverly Wayne Danielle Roy Theresa Ralph Sophia Randy Marie Eugene Diana Vincent Brittany Russell "
         "Natalie Elijah Isabella Louis Charlotte Bobby Rose Philip Alexis Johnny Kayla").split()
LAST = ("Smith Johnson Williams Brown Jones Garcia Miller Davis Rodriguez Martinez Hernandez Lopez Gonzalez "
        "Wilson Anderson Thomas Taylor Moore Jackson Martin Lee Perez Thompson White Harris Sanchez Clark "
        "Ramirez Lewis Robinson Walker Young Allen King Wright Scott Torres Nguyen Hill Flores Green Adams "
        "Nelson Baker Hall Rivera Campbell Mitchell Carter Roberts Gomez Phillips Evans Turner Diaz Parker "
        "Cruz Edwards Collins Reyes Stewart Morris Morales Murphy Cook Rogers Gutierrez Ortiz Morgan Cooper "
        "Peterson Bailey Reed Kelly Howard Ramos Kim Cox Ward Richardson Watson Brooks Chavez Wood James "
        "Bennett Gray Mendoza Ruiz Hughes Price Alvarez Castillo Sanders Patel Myers Long Ross Foster Jimenez "
        "Powell Jenkins Perry Russell Sullivan Bell Coleman Butler Henderson Barnes Gonzales Fisher Vasquez "
        "Simmons Romero Jordan Patterson Alexander Hamilton Graham Reynolds Griffin Wallace Moreno West Cole "
        "Hayes Bryant Herrera Gibson Ellis Tran Medina Aguilar Stevens Murray Ford Castro Marshall Owens "
        "Harrison Fernandez McDonald Woods Washington Kennedy Wells Vargas Henry Chen Freeman Webb Tucker "
        "Guzman Burns Crawford Olson Simpson Porter Hunter Gordon Mendez Silva Shaw Snyder Mason Dixon Munoz "
        "Hunt Hicks Holmes Palmer Wagner Black Robertson Boyd Rose Stone Salazar Fox Warren Mills Meyer Rice "
        "Schmidt Garza Daniels Ferguson Nichols Stephens Soto Weaver Ryan Gardner Payne Grant Dunn Kelley "
        "Spencer Hawkins Arnold Pierce Vazquez Hansen Peters Santos Hart Bradley Knight Elliott Cunningham "
        "Duncan Armstrong Hudson Carroll Lane Riley Andrews Alvarado Ray Delgado Berry Perkins Hoffman "
        "Johnston Matthews Pena Richards Contreras Willis Carpenter Lawrence Sandoval").split()
CITIES = ("Springfield Riverside Franklin Greenville Bristol Clinton Fairview Salem Madison Georgetown Arlington "
          "Ashland Dover Oxford Jackson Burlington Manchester Milton Newport Auburn Dayton Lexington Milford "
          "Winchester Hudson Kingston Mount-Vernon Oakland Clayton Marion").split()
STREETS = ("Main Street|Oak Avenue|Maple Drive|Cedar Lane|Pine Road|Elm Street|Washington Boulevard|Lake View|"
           "Hill Road|Park Avenue|Sunset Boulevard North|Church Street|River Road|Mill Lane|Spring Street|"
           "Highland Avenue|Forest Drive|Meadow Way|Broadway|Chestnut Court|Willow Lane|Ridge Road|"
           "Center Street|Market Square|King George Road|Valley View Drive|Orchard Lane|Bay Street|"
           "Harbor Point|Lincoln Way").split("|")
DOMAINS = ("example.com", "mail.net", "inbox.org", "post.io", "web.de")
TAGS = ("gold", "silver", "newsletter", "vip", "returning", "online", "store", "b2b")


def _zips():
    """Each city owns one to three zip codes (zip -> city holds by construction)."""
    rng = Stream(derive_key("dupforge", "zips"))
    zips, code = [], 10000
    for city in CITIES:
        for _ in range(1 + rng.randrange(3)):
            code += 1 + rng.randrange(40)
            zips.append((str(code), city))
    return zips


def people(n: int, seed: int = 7) -> list[dict]:
    """A flat person table: id, names, email, phone, birth date, address and salary."""
    rng = Stream(derive_key("people", seed))
    zips = _zips()
    rows = []
    phones = set()
    for i in range(n):
        first, last = rng.choice(FIRST), rng.choice(LAST)
        while True:
            phone = f"{rng.randint(201, 989)}-{rng.randint(200, 999)}-{rng.randint(0, 9999):04d}"
            if phone not in phones:
                phones.add(phone)
                break
        zip_code, city = rng.choice(zips)
        y, m, d = rng.randint(1950, 2004), rng.randint(1, 12), rng.randint(1, 28)
        rows.append({
            "id": Decimal(i + 1),
            "first_name": first,
            "last_name": last,
            "email": f"{first.lower()}.{last.lower()}{i + 1}@{rng.choice(DOMAINS)}",
            "phone": phone,
            "birth_date": f"{y:04d}-{m:02d}-{d:02d}",
            "street": f"{rng.randint(1, 60)} {rng.choice(STREETS)}",
            "zip": zip_code,
            "city": city,
            "salary": Decimal(20000 + 500 * rng.randrange(200)),
        })
    return rows


def customers(n: int, seed: int = 11) -> list[dict]:
    """Nested customer documents with a combined name, an address object and a tag list."""
    rng = Stream(derive_key("customers", seed))
    zips = _zips()
    out = []
    for i in range(n):
        first, last = rng.choice(FIRST), rng.choice(LAST)
        zip_code, city = rng.choice(zips)
        tags = []
        for t in TAGS:
            if rng.random() < 0.3:
                tags.append(t)
        out.append({
            "customer_no": f"C-{100000 + i}",
            "name": f"{last}, {first}",
            "contact": {"email": f"{first.lower()}{i}@{rng.choice(DOMAINS)}",
                        "phone": f"({rng.randint(201, 989)}) {rng.randint(200, 999)}-{i % 10000:04d}"},
            "address": {"street": f"{rng.randint(1, 60)} {rng.choice(STREETS)}", "zip": zip_code, "city": city},
            "since": f"{rng.randint(1, 28):02d}.{rng.randint(1, 12):02d}.{rng.randint(1995, 2023)}",
            "tags": tags,
        })
    return out


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    header = list(rows[0]) if rows else []
    buf.write(csv_line(header))
    for r in rows:
        buf.write(csv_line([csv_cell(r[h]) for h in header]))
    return buf.getvalue()


def to_jsonl(rows: list[dict]) -> str:
    return "".join(encode_value(r) + "\n" for r in rows)


def write_people_csv(path, n: int, seed: int = 7) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(people(n, seed)))


def write_customers_jsonl(path, n: int, seed: int = 11) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_jsonl(customers(n, seed)))
