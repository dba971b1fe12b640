#!/usr/bin/env python3
"""Regenerates the bioS string tables. Output is committed; rerunning with the
same seed reproduces the files exactly."""
import random

SEED = 20240408
rng = random.Random(SEED)

ONSETS = ["b", "br", "c", "ch", "d", "dr", "f", "g", "gr", "h", "j", "k", "l", "m",
          "n", "p", "pr", "r", "s", "sh", "st", "t", "th", "tr", "v", "w", "z"]
VOWELS = ["a", "e", "i", "o", "u", "ai", "ea", "io", "ou", "y"]
CODAS = ["", "", "l", "n", "r", "s", "th", "nd", "rk", "x", "m", "ck"]

used = set()


def word(min_syl, max_syl):
    while True:
        n = rng.randint(min_syl, max_syl)
        w = "".join(rng.choice(ONSETS) + rng.choice(VOWELS) for _ in range(n)) + rng.choice(CODAS)
        w = w.capitalize()
        if 4 <= len(w) <= 11 and w not in used:
            used.add(w)
            return w


def table(count, min_syl, max_syl):
    return [word(min_syl, max_syl) for _ in range(count)]


STATES = ["AL", "AK", "AZ", "AR", "CA", "CO", "CT", "DE", "FL", "GA", "HI", "ID", "IL",
          "IN", "IA", "KS", "KY", "LA", "ME", "MD", "MA", "MI", "MN", "MS", "MO", "MT",
          "NE", "NV", "NH", "NJ", "NM", "NY", "NC", "ND", "OH", "OK", "OR", "PA", "RI",
          "SC", "SD", "TN", "TX", "UT", "VT", "VA", "WA", "WV", "WI", "WY"]

MAJORS = [
    "Accounting", "Acting", "Aerospace Engineering", "African Studies", "Agriculture",
    "Anthropology", "Applied Mathematics", "Archaeology", "Architecture", "Art History",
    "Astronomy", "Astrophysics", "Biochemistry", "Bioengineering", "Biology",
    "Biomedical Engineering", "Biophysics", "Botany", "Business Administration",
    "Chemical Engineering", "Chemistry", "Civil Engineering", "Classics",
    "Cognitive Science", "Communications", "Comparative Literature", "Computer Engineering",
    "Computer Science", "Construction Management", "Creative Writing", "Criminology",
    "Dance", "Data Science", "Dentistry", "Design", "Drama", "Earth Science",
    "Ecology", "Economics", "Education", "Electrical Engineering", "English Literature",
    "Entrepreneurship", "Environmental Science", "Epidemiology", "Film Studies",
    "Finance", "Fine Arts", "Food Science", "Forestry", "French", "Genetics",
    "Geography", "Geology", "German", "Graphic Design", "Health Sciences", "History",
    "Hospitality Management", "Human Resources", "Industrial Engineering",
    "Information Systems", "International Relations", "Journalism", "Kinesiology",
    "Law", "Linguistics", "Management", "Marine Biology", "Marketing",
    "Materials Science", "Mathematics", "Mechanical Engineering", "Medicine",
    "Microbiology", "Music", "Neuroscience", "Nuclear Engineering", "Nursing",
    "Nutrition", "Oceanography", "Operations Research", "Pharmacy", "Philosophy",
    "Photography", "Physics", "Political Science", "Psychology", "Public Health",
    "Public Policy", "Religious Studies", "Robotics", "Social Work", "Sociology",
    "Software Engineering", "Spanish", "Statistics", "Theology", "Urban Planning",
    "Zoology",
]
assert len(MAJORS) == 100 and len(set(MAJORS)) == 100

first = table(400, 1, 2)
middle = table(400, 1, 2)
last = table(1000, 2, 3)

cities = [f"{word(1, 3)}, {rng.choice(STATES)}" for _ in range(200)]

UNI_PATTERNS = ["University of {}", "{} University", "{} Institute of Technology",
                "{} College", "{} State University"]
universities = [rng.choice(UNI_PATTERNS).format(word(1, 3)) for _ in range(300)]

EMP_SUFFIX = ["Corporation", "Labs", "Systems", "Group", "Industries", "Holdings",
              "Technologies", "Partners", "Dynamics", "Networks"]
employers = [f"{word(1, 3)} {rng.choice(EMP_SUFFIX)}" for _ in range(263)]
employer_city = [rng.randrange(200) for _ in range(263)]

for name, rows in [("first_names", first), ("middle_names", middle), ("last_names", last),
                   ("cities", cities), ("universities", universities), ("majors", MAJORS),
                   ("employers", employers)]:
    with open(f"{name}.txt", "w") as f:
        f.write("\n".join(rows) + "\n")
with open("employer_city.txt", "w") as f:
    f.write("\n".join(str(c) for c in employer_city) + "\n")
