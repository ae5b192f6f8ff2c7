import numpy as np
import pytest

from proxyadjust import RoleMap, estimate_latent_proxy, export_dataset, ingest, load_role_map
from proxyadjust.errors import IngestError
from proxyadjust.synthetic_ehr import write_ehr_sample


def basic_roles(**overrides):
    spec = dict(
        roles={"z1": "proxy", "z2": "proxy", "treat": "treatment", "out": "outcome"},
    )
    spec.update(overrides)
    return RoleMap(**spec)


def write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestExclusionRules:
    def test_missing_outcome_row_dropped(self, tmp_path):
        path = write_csv(
            tmp_path,
            "z1,z2,treat,out\n"
            "1.0,2.0,1,0.5\n"
            "1.5,2.5,0,\n"
            "2.0,3.0,1,0.7\n"
            "2.5,3.5,0,0.1\n"
            "3.0,4.0,1,0.9\n",
        )
        data, report = ingest(path, basic_roles())
        assert report.rows_read == 5
        assert report.rows_dropped_missing_treatment_outcome == 1
        assert data.n == 4

    def test_excess_missing_row_dropped(self, tmp_path):
        roles = RoleMap(
            roles={
                "z1": "proxy",
                "z2": "proxy",
                "z3": "proxy",
                "c1": "covariate",
                "treat": "treatment",
                "out": "outcome",
            }
        )
        path = write_csv(
            tmp_path,
            "z1,z2,z3,c1,treat,out\n"
            "1,2,3,4,1,0.5\n"
            ",NA,,4,0,0.2\n"      # three missing features -> dropped
            ",2,3,4,1,0.1\n"      # one missing -> imputed
            "2,3,4,5,0,0.6\n",
        )
        data, report = ingest(path, roles)
        assert report.rows_dropped_excess_missing == 1
        assert report.cells_imputed == 1
        assert data.n == 3
        # imputed value is the column median of kept rows (1, 2): 1.5
        assert data.z[1, 0] == pytest.approx(1.5)

    def test_treatment_missing_takes_precedence(self, tmp_path):
        path = write_csv(
            tmp_path,
            "z1,z2,treat,out\n"
            "1.0,2.0,1,0.5\n"
            ",,NA,0.3\n",
        )
        _, report = ingest(path, basic_roles())
        assert report.rows_dropped_missing_treatment_outcome == 1
        assert report.rows_dropped_excess_missing == 0

    def test_zero_surviving_rows(self, tmp_path):
        path = write_csv(tmp_path, "z1,z2,treat,out\n1.0,2.0,,\n")
        with pytest.raises(IngestError, match="no rows survived"):
            ingest(path, basic_roles())

    def test_report_reconciles(self, tmp_path):
        path = write_csv(
            tmp_path,
            "z1,z2,treat,out\n"
            "1,2,1,0.5\n"
            "1,2,,0.5\n"
            "1,2,0,\n"
            "3,4,1,0.2\n",
        )
        data, report = ingest(path, basic_roles())
        assert report.rows_read == report.rows_kept + 2
        assert report.rows_kept == data.n


class TestEncoding:
    def test_reference_is_most_frequent(self, tmp_path):
        roles = RoleMap(
            roles={"z1": "proxy", "cat": "covariate", "treat": "treatment", "out": "outcome"},
            categorical=("cat",),
        )
        path = write_csv(
            tmp_path,
            "z1,cat,treat,out\n"
            "1,a,1,0.1\n"
            "2,a,0,0.2\n"
            "3,a,1,0.3\n"
            "4,b,0,0.4\n",
        )
        data, _ = ingest(path, roles)
        assert data.x_names == ("cat=b",)
        np.testing.assert_allclose(data.x[:, 0], [0, 0, 0, 1])

    def test_reference_tie_broken_alphabetically(self, tmp_path):
        roles = RoleMap(
            roles={"z1": "proxy", "cat": "covariate", "treat": "treatment", "out": "outcome"},
            categorical=("cat",),
        )
        path = write_csv(
            tmp_path,
            "z1,cat,treat,out\n1,b,1,0.1\n2,b,0,0.2\n3,a,1,0.3\n4,a,0,0.4\n",
        )
        data, _ = ingest(path, roles)
        assert data.x_names == ("cat=b",)  # tie between a and b -> a is reference

    def test_reference_override(self, tmp_path):
        roles = RoleMap(
            roles={"z1": "proxy", "cat": "covariate", "treat": "treatment", "out": "outcome"},
            categorical=("cat",),
            reference_levels={"cat": "b"},
        )
        path = write_csv(
            tmp_path,
            "z1,cat,treat,out\n1,a,1,0.1\n2,a,0,0.2\n3,b,1,0.3\n",
        )
        data, _ = ingest(path, roles)
        assert data.x_names == ("cat=a",)

    def test_unknown_level_for_designated_categorical(self, tmp_path):
        roles = RoleMap(
            roles={"z1": "proxy", "cat": "covariate", "treat": "treatment", "out": "outcome"},
            categorical=("cat",),
        )
        path = write_csv(
            tmp_path,
            "z1,cat,treat,out\n1,a,1,0.1\n2,,0,0.2\n3,a,1,0.3\n4,b,0,0.4\n",
        )
        data, report = ingest(path, roles)
        assert report.unknown_category_counts == {"cat": 1}
        assert "cat=Unknown" in data.x_names
        assert report.cells_imputed == 0

    def test_categorical_proxy_expands_into_z(self, tmp_path):
        roles = RoleMap(
            roles={"z1": "proxy", "sev": "proxy", "treat": "treatment", "out": "outcome"},
            categorical=("sev",),
        )
        path = write_csv(
            tmp_path,
            "z1,sev,treat,out\n1,low,1,0.1\n2,high,0,0.2\n3,low,1,0.3\n4,mid,1,0.4\n",
        )
        data, _ = ingest(path, roles)
        assert set(data.z_names) == {"z1", "sev=high", "sev=mid"}
        assert data.roles["sev=high"] == "proxy"

    def test_no_constant_indicator_columns(self, tmp_path):
        roles = RoleMap(
            roles={"z1": "proxy", "cat": "covariate", "treat": "treatment", "out": "outcome"},
            categorical=("cat",),
        )
        path = write_csv(
            tmp_path,
            "z1,cat,treat,out\n1,a,1,0.1\n2,a,0,0.2\n3,a,1,0.3\n",
        )
        data, _ = ingest(path, roles)
        assert data.x_names == ()  # single level -> reference only, no columns

    def test_treatment_and_outcome_coding(self, tmp_path):
        roles = basic_roles(
            treatment_coding={"ADMIT": 1, "HOME": 0},
            outcome_coding={"yes": 1, "no": 0},
        )
        path = write_csv(
            tmp_path,
            "z1,z2,treat,out\n1,2,ADMIT,yes\n3,4,HOME,no\n",
        )
        data, _ = ingest(path, roles)
        np.testing.assert_allclose(data.a, [1.0, 0.0])
        np.testing.assert_allclose(data.y, [1.0, 0.0])

    def test_uncoded_level_rejected(self, tmp_path):
        roles = basic_roles(treatment_coding={"ADMIT": 1, "HOME": 0})
        path = write_csv(tmp_path, "z1,z2,treat,out\n1,2,TRANSFER,0.4\n")
        with pytest.raises(IngestError, match="TRANSFER"):
            ingest(path, roles)


class TestErrors:
    def test_missing_required_column(self, tmp_path):
        path = write_csv(tmp_path, "z1,treat,out\n1,1,0.5\n")
        with pytest.raises(IngestError, match="z2"):
            ingest(path, basic_roles())

    def test_unassigned_column(self, tmp_path):
        path = write_csv(tmp_path, "z1,z2,treat,out,extra\n1,2,1,0.5,9\n")
        with pytest.raises(IngestError, match="extra"):
            ingest(path, basic_roles())

    def test_unparseable_cell_reports_row_and_column(self, tmp_path):
        path = write_csv(
            tmp_path, "z1,z2,treat,out\n1,2,1,0.5\n1,oops,0,0.2\n"
        )
        with pytest.raises(IngestError, match=r"row 1.*column 'z2'"):
            ingest(path, basic_roles())

    def test_role_map_invariants(self):
        with pytest.raises(ValueError, match="treatment"):
            RoleMap(roles={"z1": "proxy", "out": "outcome"})
        with pytest.raises(ValueError, match="proxy"):
            RoleMap(roles={"treat": "treatment", "out": "outcome"})


class TestRoundTrip:
    def test_clean_file_round_trips(self, tmp_path):
        text = (
            "z1,z2,treat,out\n"
            "1.5,2.0,1.0,0.25\n"
            "0.5,3.5,0.0,0.75\n"
            "2.25,1.0,1.0,0.5\n"
        )
        path = write_csv(tmp_path, text)
        data, report = ingest(path, basic_roles())
        assert report.rows_dropped_missing_treatment_outcome == 0
        assert report.rows_dropped_excess_missing == 0
        assert report.cells_imputed == 0
        out = tmp_path / "export.csv"
        export_dataset(data, out)
        assert out.read_text() == text

    def test_kept_rows_preserve_order(self, tmp_path):
        path = write_csv(
            tmp_path,
            "z1,z2,treat,out\n10,1,1,0.1\n20,2,,0.2\n30,3,0,0.3\n40,4,1,0.4\n",
        )
        data, _ = ingest(path, basic_roles())
        np.testing.assert_allclose(data.z[:, 0], [10.0, 30.0, 40.0])

    def test_tab_delimiter(self, tmp_path):
        path = write_csv(tmp_path, "z1\tz2\ttreat\tout\n1\t2\t1\t0.5\n", name="data.tsv")
        data, _ = ingest(path, basic_roles(), delimiter="\t")
        assert data.n == 1


class TestEhrIntegration:
    def test_sample_flows_through_ingest_and_estimator(self, tmp_path):
        csv_path, roles_path = write_ehr_sample(tmp_path, n=600, seed=1)
        roles = load_role_map(roles_path)
        data, report = ingest(csv_path, roles)
        assert report.rows_read == 600
        assert report.rows_dropped_missing_treatment_outcome > 0
        assert report.rows_dropped_excess_missing > 0
        assert report.cells_imputed > 0
        assert any(report.unknown_category_counts.values())
        assert set(np.unique(data.a)) == {0.0, 1.0}
        result = estimate_latent_proxy(data)
        assert np.isfinite(result.ate)
        assert abs(result.ate) < 1.0
