# -*- coding: utf-8 -*-
# Ordered mapping tests
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:

from mkcnet.sortabledict import SortableDict


def test_set_get():
    a_dict = SortableDict()
    a_dict["backbone.w"] = 'a'
    a_dict["head.w"] = 'b'
    assert a_dict["backbone.w"] == 'a'
    assert a_dict["head.w"] == 'b'


def test_iter_keeps_insertion_order():
    a_dict = SortableDict()
    a_dict[3] = 'a'
    a_dict[2] = 'b'
    a_dict[1] = 'c'
    assert list(a_dict) == [3, 2, 1]


def test_del():
    a_dict = SortableDict([(1, 'a'), (2, 'b'), (3, 'c')])
    del a_dict[2]
    assert list(a_dict.items()) == [(1, 'a'), (3, 'c')]
    assert len(a_dict) == 2


def test_initial_dict_constructor():
    a_dict = {1: 'abcd', "a": 1234}
    assert dict(SortableDict(a_dict)) == a_dict


def test_repr():
    a_dict = SortableDict([(1, 'a'), (2, 'b')])
    assert repr(a_dict) == "SortableDict{1='a', 2='b'}"


def test_add_item_noreplace_duplicate():
    a_dict = SortableDict([(1, 'a')])
    try:
        a_dict.add_item(1, 'a2', replace=False)
        assert False, 'Replaced/inserted duplicate key'
    except KeyError:
        pass


def test_add_item_replace_keeps_position():
    a_dict = SortableDict([(1, 'a'), (2, 'b'), (3, 'c')])
    a_dict.add_item(1, 'd', replace=True)
    assert list(a_dict.items()) == [(1, 'd'), (2, 'b'), (3, 'c')]


def test_validate_fn_refuses_values():
    def positive(value):
        if value <= 0:
            raise TypeError("must be positive")

    a_dict = SortableDict(validate_fn=positive)
    a_dict['a'] = 1
    try:
        a_dict['b'] = -1
        assert False, 'Invalid value accepted'
    except TypeError:
        pass
    assert list(a_dict) == ['a']
