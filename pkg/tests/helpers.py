from datetime import date

from smscoach.core import Arm, Gender, PatientProfile


def profile(pid="P01", arm=Arm.PERSONALIZED, goal=140.0, enrolled=date(2015, 1, 4), **kw):
    fields = dict(
        id=pid,
        age=55,
        gender=Gender.FEMALE,
        weekly_goal=goal,
        sessions_per_week=3,
        arm=arm,
        baseline_hba1c=8.0,
        enrolled_on=enrolled,
    )
    fields.update(kw)
    return PatientProfile(**fields)
