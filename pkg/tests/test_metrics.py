import io
import json
import random

import pandas as pd
import pytest

from capture.event_log import SchemaError
from capture.records import DeviceManifest, Label, ManifestEntry
from classifier.verdict import Verdict
from evaluation.metrics import (
    Confusion,
    DeviceSuccess,
    compute_metrics,
    device_averaged_confusion,
    per_device_success,
    success_cdf,
)
from evaluation.report import NoPredictions, attach_truth, build_report, read_verdicts, write_cdf_csv, write_report

IOT, NOT, ABSTAIN = Verdict.IOT, Verdict.NOT, Verdict.ABSTAIN


class TestComputeMetrics:
    def test_dhcp_table_row(self):
        m = compute_metrics(Confusion(tp=45, fp=1, tn=70, fn=3))
        assert m.recall == pytest.approx(0.9375, abs=0.0005)
        assert m.precision == pytest.approx(0.9782, abs=0.0005)
        assert m.f1 == pytest.approx(0.9573, abs=0.0005)

    def test_perfect(self):
        assert compute_metrics(Confusion(tp=10)).to_dict() == {'recall': 1.0, 'precision': 1.0, 'f1': 1.0}

    def test_all_zero_is_undefined(self):
        assert compute_metrics(Confusion()).to_dict() == {'recall': None, 'precision': None, 'f1': None}

    def test_no_true_positives(self):
        m = compute_metrics(Confusion(fp=2, fn=3))
        assert (m.recall, m.precision, m.f1) == (0.0, 0.0, None)

    def test_only_negatives(self):
        m = compute_metrics(Confusion(tn=5))
        assert m.recall is None and m.precision is None and m.f1 is None

    def test_negative_counts(self):
        with pytest.raises(ValueError):
            Confusion(tp=-1)

    def test_from_predictions_skips_abstain(self):
        pairs = [(Label.IOT, IOT), (Label.IOT, NOT), (Label.NOT, IOT), (Label.NOT, NOT), (Label.NOT, ABSTAIN)]
        assert Confusion.from_predictions(pairs) == Confusion(tp=1, fn=1, fp=1, tn=1)


class TestPerDevice:
    def test_one_device(self):
        predictions = [('a', Label.IOT, IOT)] * 9 + [('a', Label.IOT, NOT)]
        success = per_device_success(predictions)
        assert success['a'].rate == 0.9
        assert success_cdf(success) == [(0.9, 1.0)]

    def test_two_devices(self):
        predictions = [('a', Label.IOT, IOT), ('a', Label.IOT, NOT), ('b', Label.NOT, NOT)]
        assert success_cdf(per_device_success(predictions)) == [(0.5, 0.5), (1.0, 1.0)]

    def test_abstentions_reduce_coverage_only(self):
        success = per_device_success([('a', Label.NOT, NOT), ('a', Label.NOT, ABSTAIN)])['a']
        assert (success.rate, success.coverage, success.abstained) == (1.0, 0.5, 1)

    def test_device_that_always_abstains(self):
        success = per_device_success([('a', Label.NOT, ABSTAIN), ('b', Label.IOT, IOT)])
        assert success['a'].rate is None
        assert success_cdf(success) == [(1.0, 1.0)]

    def test_empty(self):
        with pytest.raises(ValueError):
            per_device_success([])

    def test_cdf_matches_sort_and_count(self):
        rng = random.Random(30)
        predictions = []
        for device in range(30):
            label = rng.choice([Label.IOT, Label.NOT])
            for _ in range(rng.randint(1, 6)):
                predictions.append((f'd{device}', label, rng.choice([IOT, NOT])))
        success = per_device_success(predictions)
        rates = sorted(entry.rate for entry in success.values())
        expected = [(r, sum(1 for x in rates if x <= r) / len(rates)) for r in sorted(set(rates))]
        assert success_cdf(success) == pytest.approx(expected)

    def test_device_averaged_confusion(self):
        success = {
            'cam': DeviceSuccess(Label.IOT, correct=3, total=4, abstained=0),
            'plug': DeviceSuccess(Label.IOT, correct=1, total=1, abstained=2),
            'phone': DeviceSuccess(Label.NOT, correct=1, total=2, abstained=0),
        }
        c = device_averaged_confusion(success)
        assert (c.tp, c.fn, c.tn, c.fp) == (1.75, 0.25, 0.5, 0.5)
        assert c.total == 3.0


class TestReport:
    PREDICTIONS = [
        ('cam', Label.IOT, IOT), ('cam', Label.IOT, IOT), ('cam', Label.IOT, NOT),
        ('phone', Label.NOT, NOT), ('phone', Label.NOT, ABSTAIN),
    ]

    def test_build_report(self):
        report = build_report(self.PREDICTIONS)
        assert report.confusion == Confusion(tp=2, fn=1, tn=1)
        assert report.abstained == 1
        assert report.metrics.recall == pytest.approx(2 / 3)
        assert report.device_metrics.precision == 1.0
        assert report.cdf_points == [(2 / 3, 0.5), (1.0, 1.0)]

    def test_report_json_shape(self):
        out = io.StringIO()
        write_report(build_report(self.PREDICTIONS), out)
        obj = json.loads(out.getvalue())
        assert set(obj) == {'pooled', 'device_averaged', 'abstained', 'per_device', 'cdf'}
        assert obj['pooled']['confusion'] == {'tp': 2, 'fp': 0, 'tn': 1, 'fn': 1}
        assert obj['per_device']['phone']['coverage'] == 0.5

    def test_cdf_csv(self, tmp_path):
        path = tmp_path / 'cdf.csv'
        write_cdf_csv(build_report(self.PREDICTIONS), path)
        frame = pd.read_csv(path)
        assert list(frame.columns) == ['success_rate', 'fraction_of_devices']
        assert frame['fraction_of_devices'].tolist() == [0.5, 1.0]

    def test_no_predictions(self):
        with pytest.raises(NoPredictions):
            build_report([])


class TestVerdictLines:
    def test_read_and_attach(self):
        lines = [
            '{"device": "cam", "window_start": 0, "width": 600, "score": 1.2, "verdict": "IoT"}',
            '',
            '{"device": "ghost", "window_start": null, "verdict": "NoT"}',
            '{"device": "phone", "window_start": null, "verdict": "Abstain"}',
        ]
        pairs = read_verdicts(lines)
        assert pairs == [('cam', IOT), ('ghost', NOT), ('phone', ABSTAIN)]
        manifest = DeviceManifest(entries=(ManifestEntry('cam', 'Camera', Label.IOT),
                                           ManifestEntry('phone', 'Phone', Label.NOT)))
        assert attach_truth(pairs, manifest) == [('cam', Label.IOT, IOT), ('phone', Label.NOT, ABSTAIN)]

    @pytest.mark.parametrize('line', ['{"device": "x"', '{"device": "x"}', '{"device": "x", "verdict": "Maybe"}',
                                      '[1, 2]'])
    def test_malformed(self, line):
        with pytest.raises(SchemaError) as info:
            read_verdicts(['{"device": "ok", "verdict": "IoT"}', line])
        assert info.value.line_no == 2
